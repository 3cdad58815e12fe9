"""Line-oriented tableau text format.

Example::

    # comment lines and trailing comments start with '#'
    NAME     EPIRK4s3A
    FORM     residual            # or forward_difference
    ORDER    4
    STRATEGY mixed
    EMBEDDED_ORDER 3
    STAGES   3

    ALPHA
    (2,1) = 1/2
    (3,1) = 2/3

    BETA
    (1) = 1

    PSI
    (2,1) = 1/2; phi_1
    (3,1) = 2/3; phi_1
    (4,1) = 1; phi_1
    (4,2) = 1; 32*phi_3 - 144*phi_4
    (4,3) = 1; -27/2*phi_3 + 81*phi_4

    EMBEDDED
    (1) = 1; phi_1
    (2) = 1; 8*phi_3

PSI and EMBEDDED entries are ``g; sum of c*phi_k``. Repeating a key adds
another scale to the same coefficient function. ALPHA/BETA entries that
are not listed default to 1.
"""

import re
from fractions import Fraction
from pathlib import Path
from typing import Dict, List, Optional, Tuple, Union

from epirk.exceptions import InvalidArgumentError, TableauParseError
from epirk.models.method import MethodDefinition, MethodForm, Strategy
from epirk.models.phi_combination import PhiCombination, PhiSum, as_fraction

HEADER_KEYS = {"NAME", "FORM", "ORDER", "STRATEGY", "STAGES", "EMBEDDED_ORDER"}
SECTIONS = {"ALPHA", "BETA", "PSI", "EMBEDDED"}
FORM_ALIASES = {
    "residual": MethodForm.RESIDUAL,
    "exprb_residual": MethodForm.RESIDUAL,
    "forward_difference": MethodForm.FORWARD_DIFFERENCE,
    "epirk_forward_difference": MethodForm.FORWARD_DIFFERENCE,
}

_NUMBER = r"(?:\d+(?:/\d+)?|\d*\.\d+(?:[eE][+-]?\d+)?|\d+\.\d*(?:[eE][+-]?\d+)?)"
_TERM = rf"([+-]?)(?:({_NUMBER})\*)?phi_(\d+)"
_TERMS_RE = re.compile(rf"(?:{_TERM})+")
_TERM_RE = re.compile(_TERM)
_PAIR_KEY_RE = re.compile(r"\(\s*(\d+)\s*,\s*(\d+)\s*\)")
_SINGLE_KEY_RE = re.compile(r"\(\s*(\d+)\s*\)")


def _rational(text: str, line: int) -> Fraction:
    text = text.strip()
    sign = 1
    if text.startswith("-"):
        sign, text = -1, text[1:].strip()
    elif text.startswith("+"):
        text = text[1:].strip()
    if not re.fullmatch(_NUMBER, text):
        raise TableauParseError(f"expected a rational number, got {text!r}", line)
    try:
        return sign * as_fraction(text)
    except InvalidArgumentError as exc:
        raise TableauParseError(str(exc), line) from None


def parse_phi_terms(text: str, line: int = 0) -> Dict[int, Fraction]:
    """Parse '32*phi_3 - 144*phi_4' into {3: 32, 4: -144}."""
    compact = re.sub(r"\s+", "", text)
    if not compact or not _TERMS_RE.fullmatch(compact):
        raise TableauParseError(f"malformed phi combination {text.strip()!r}", line)
    terms: Dict[int, Fraction] = {}
    for sign, coeff, k in _TERM_RE.findall(compact):
        value = as_fraction(coeff) if coeff else Fraction(1)
        if sign == "-":
            value = -value
        index = int(k)
        terms[index] = terms.get(index, Fraction(0)) + value
    return terms


def _split_entry(body: str, line: int) -> Tuple[str, str]:
    if "=" not in body:
        raise TableauParseError(f"expected '(key) = value', got {body!r}", line)
    key, value = body.split("=", 1)
    return key.strip(), value.strip()


def _pair_key(text: str, line: int) -> Tuple[int, int]:
    match = _PAIR_KEY_RE.fullmatch(text)
    if not match:
        raise TableauParseError(f"expected '(i,j)', got {text!r}", line)
    return int(match.group(1)), int(match.group(2))


def _single_key(text: str, line: int) -> int:
    match = _SINGLE_KEY_RE.fullmatch(text)
    if not match:
        raise TableauParseError(f"expected '(j)', got {text!r}", line)
    return int(match.group(1))


def _scaled_terms(value: str, line: int) -> PhiCombination:
    if ";" not in value:
        raise TableauParseError(f"expected 'g; terms', got {value!r}", line)
    scale_text, terms_text = value.split(";", 1)
    scale = _rational(scale_text, line)
    if scale <= 0:
        raise TableauParseError(f"scale must be positive, got {scale}", line)
    try:
        return PhiCombination.of(parse_phi_terms(terms_text, line), scale)
    except InvalidArgumentError as exc:
        if isinstance(exc, TableauParseError):
            raise
        raise TableauParseError(str(exc), line) from None


def parse_tableau(text: str, source: str = "<string>") -> MethodDefinition:
    """
    Parse tableau text into a MethodDefinition.

    Args:
        text: tableau description
        source: name used for the default method name

    Returns:
        MethodDefinition

    Raises:
        TableauParseError: With the offending line number
    """
    header: Dict[str, Tuple[str, int]] = {}
    alpha: Dict[Tuple[int, int], Fraction] = {}
    beta: Dict[int, Fraction] = {}
    psi_parts: Dict[Tuple[int, int], List[PhiCombination]] = {}
    embedded_parts: Dict[int, List[PhiCombination]] = {}
    section: Optional[str] = None

    for number, raw in enumerate(text.splitlines(), start=1):
        body = raw.split("#", 1)[0].strip()
        if not body:
            continue
        word = body.split()[0].upper()
        if word in SECTIONS and body.upper() == word:
            section = word
            continue
        if word in HEADER_KEYS and not body.startswith("("):
            parts = body.split(None, 1)
            if len(parts) != 2:
                raise TableauParseError(f"{word} needs a value", number)
            header[word] = (parts[1].strip(), number)
            section = None
            continue
        if section is None:
            raise TableauParseError(f"unexpected line outside any section: {body!r}", number)

        key_text, value = _split_entry(body, number)
        if section == "ALPHA":
            alpha[_pair_key(key_text, number)] = _rational(value, number)
        elif section == "BETA":
            beta[_single_key(key_text, number)] = _rational(value, number)
        elif section == "PSI":
            psi_parts.setdefault(_pair_key(key_text, number), []).append(
                _scaled_terms(value, number)
            )
        else:
            embedded_parts.setdefault(_single_key(key_text, number), []).append(
                _scaled_terms(value, number)
            )

    if "STAGES" not in header:
        raise TableauParseError("missing STAGES", len(text.splitlines()) or 1)
    stages_text, stages_line = header["STAGES"]
    if not stages_text.isdigit() or int(stages_text) < 1:
        raise TableauParseError(
            f"STAGES must be a positive integer, got {stages_text!r}", stages_line
        )
    stages = int(stages_text)

    for (i, j), parts in psi_parts.items():
        if not 2 <= i <= stages + 1 or not 1 <= j < i:
            line = _find_line(text, f"({i},{j})")
            raise TableauParseError(f"psi({i},{j}) outside a {stages}-stage tableau", line)

    form = MethodForm.RESIDUAL
    if "FORM" in header:
        form_text, form_line = header["FORM"]
        if form_text.lower() not in FORM_ALIASES:
            raise TableauParseError(f"unknown FORM {form_text!r}", form_line)
        form = FORM_ALIASES[form_text.lower()]
    strategy = Strategy.VERTICAL
    if "STRATEGY" in header:
        strategy_text, strategy_line = header["STRATEGY"]
        try:
            strategy = Strategy(strategy_text.lower())
        except ValueError:
            raise TableauParseError(f"unknown STRATEGY {strategy_text!r}", strategy_line) from None

    psi = {key: PhiSum.of(*parts) for key, parts in psi_parts.items()}
    for (i, j) in psi:
        if i == stages + 1:
            beta.setdefault(j, Fraction(1))
        else:
            alpha.setdefault((i, j), Fraction(1))

    embedded = None
    if embedded_parts:
        embedded = {j: PhiSum.of(*parts) for j, parts in sorted(embedded_parts.items())}

    return MethodDefinition(
        name=header.get("NAME", (Path(source).stem, 0))[0],
        stages=stages,
        alpha=alpha,
        beta=beta,
        psi=psi,
        form=form,
        stiff_order=_int_header(header, "ORDER", 2),
        strategy_hint=strategy,
        embedded=embedded,
        embedded_order=_int_header(header, "EMBEDDED_ORDER", None) if embedded else None,
    )


def _int_header(header: Dict[str, Tuple[str, int]], key: str, default: Optional[int]) -> int:
    if key not in header:
        return default  # type: ignore[return-value]
    value, line = header[key]
    if not value.isdigit():
        raise TableauParseError(f"{key} must be an integer, got {value!r}", line)
    return int(value)


def _find_line(text: str, needle: str) -> int:
    compact = needle.replace(" ", "")
    for number, raw in enumerate(text.splitlines(), start=1):
        if raw.replace(" ", "").startswith(compact):
            return number
    return 0


def load_tableau(path: Union[str, Path]) -> MethodDefinition:
    """Read and parse a UTF-8 tableau file."""
    path = Path(path)
    return parse_tableau(path.read_text(encoding="utf-8"), source=str(path))


def _format_terms(combo: PhiCombination) -> str:
    pieces = []
    for k, c in combo.terms:
        sign = "-" if c < 0 else "+"
        magnitude = abs(c)
        coeff = "" if magnitude == 1 else f"{magnitude}*"
        pieces.append(f"{sign} {coeff}phi_{k}")
    text = " ".join(pieces)
    return text[2:] if text.startswith("+ ") else "-" + text[2:]


def dump_tableau(method: MethodDefinition) -> str:
    """Render a method in the text format read by parse_tableau."""
    form = "residual" if method.form == MethodForm.RESIDUAL else "forward_difference"
    lines = [
        f"NAME {method.name}",
        f"FORM {form}",
        f"ORDER {method.stiff_order}",
        f"STRATEGY {method.strategy_hint.value}",
    ]
    if method.embedded is not None and method.embedded_order is not None:
        lines.append(f"EMBEDDED_ORDER {method.embedded_order}")
    lines += [f"STAGES {method.stages}", "", "ALPHA"]
    lines += [f"({i},{j}) = {w}" for (i, j), w in sorted(method.alpha.items())]
    lines += ["", "BETA"]
    lines += [f"({j}) = {w}" for j, w in sorted(method.beta.items())]
    lines += ["", "PSI"]
    for (i, j), psi in sorted(method.psi.items()):
        lines += [f"({i},{j}) = {part.scale}; {_format_terms(part)}" for part in psi.parts]
    if method.embedded:
        lines += ["", "EMBEDDED"]
        for j, coeff in sorted(method.embedded.items()):
            lines += [f"({j}) = {part.scale}; {_format_terms(part)}" for part in coeff.parts]
    return "\n".join(lines) + "\n"
