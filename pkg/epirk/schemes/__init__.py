"""Built-in EPIRK/EXPRB schemes and the tableau file reader."""
