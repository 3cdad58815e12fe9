"""Matrix phi functions and their Krylov evaluation."""
