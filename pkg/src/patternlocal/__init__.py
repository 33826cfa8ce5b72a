"""PatternLocal."""
