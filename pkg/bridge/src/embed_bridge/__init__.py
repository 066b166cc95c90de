"""embed-bridge: serve sentence embeddings over the pipeline provider protocol."""

__version__ = "0.1.0"

from .encoders import HashEncoder, SentenceTransformerEncoder, load_encoder  # noqa: F401
from .server import BridgeConfig, serve  # noqa: F401
