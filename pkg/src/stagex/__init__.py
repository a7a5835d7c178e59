"""In-transit staging service: store servers, chunk codec, clients."""

__version__ = "0.1.0"
