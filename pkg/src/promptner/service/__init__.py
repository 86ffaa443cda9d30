from .app import ModelHolder, create_app

__all__ = ["ModelHolder", "create_app"]
