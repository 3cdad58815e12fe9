"""Method definitions, phi combinations and problems."""
