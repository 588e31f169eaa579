from .app import Gateway
from .config import GatewayConfig, ListenerConfig, PkiConfig, SshConfig
from .http import Request, Response

__all__ = [
    "Gateway",
    "GatewayConfig",
    "ListenerConfig",
    "PkiConfig",
    "Request",
    "Response",
    "SshConfig",
]
