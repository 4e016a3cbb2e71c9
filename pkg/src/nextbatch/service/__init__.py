"""REST facade, durable storage, and background job execution."""

from .app import Settings, create_app

__all__ = ["Settings", "create_app"]
