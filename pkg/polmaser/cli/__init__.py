"""Command-line surface: presets, runs, sweeps, validation."""
