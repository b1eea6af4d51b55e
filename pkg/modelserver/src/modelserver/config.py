from __future__ import annotations

from dataclasses import dataclass


@dataclass(frozen=True)
class ServerConfig:
    host: str = "127.0.0.1"
    port: int = 8090
    grounding_model: str = "toy-saturation"
    propagation_model: str = "toy-saturation"
    device: str = "cpu"
    max_frames: int = 600

    def __post_init__(self) -> None:
        if self.max_frames < 1:
            raise ValueError("max_frames must be >= 1")
        if not 0 < self.port < 65536:
            raise ValueError("port out of range")
