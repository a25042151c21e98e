"""Packaged workload shape presets (JSON, loaded via load_preset)."""
