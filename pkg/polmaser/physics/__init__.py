"""Field, collision and entanglement physics."""
