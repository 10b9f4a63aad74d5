"""Run output persistence."""
