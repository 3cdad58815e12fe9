"""Order conditions, planning, stepping and experiments."""
