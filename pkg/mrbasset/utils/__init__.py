"""Utility functions for mrbasset."""

from .parallel import ordered_map, resolve_workers, show_progress_default, threads_from_environment

__all__ = [
    "ordered_map",
    "resolve_workers",
    "show_progress_default",
    "threads_from_environment",
]
