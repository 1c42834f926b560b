from .core import ServiceError
from .client import HttpClient, LocalClient

__all__ = ["HttpClient", "LocalClient", "ServiceError"]
