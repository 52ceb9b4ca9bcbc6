"""Random lozenge tilings: sampling, limit shapes and edge statistics."""
