"""Detector adapters runnable as `python -m shadowpipe.adapters.<name>`."""
