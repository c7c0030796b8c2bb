"""Fixed-width key encoding.

Keys are unsigned integers stored big-endian so that bytewise order of the
encoded form equals numeric order.
"""

from .errors import InvalidInputError

DEFAULT_KEY_SIZE = 16
MAX_KEY_BITS = 128


def encode_key(value: int, key_size: int = DEFAULT_KEY_SIZE) -> bytes:
    if value < 0 or value.bit_length() > key_size * 8:
        raise InvalidInputError(f"key {value} does not fit in {key_size} bytes")
    return value.to_bytes(key_size, "big")


def decode_key(raw: bytes) -> int:
    return int.from_bytes(raw, "big")


def check_key(key: bytes, key_size: int) -> None:
    if not isinstance(key, (bytes, bytearray)) or len(key) != key_size:
        raise InvalidInputError(f"key must be exactly {key_size} bytes")
