from .bridge import AnnotationBridge
from .app import create_app

__all__ = ["AnnotationBridge", "create_app"]
