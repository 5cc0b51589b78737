"""Risk-aware multi-robot search planning."""
