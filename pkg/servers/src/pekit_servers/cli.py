"""Command line entry point: run one server process."""

from __future__ import annotations

import argparse

from .app import create_app
from .config import BACKENDS, ServerConfig


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="pekit-servers",
        description="Serve the segment/propose/embed/generate tool endpoints.",
    )
    parser.add_argument("--host", default="127.0.0.1")
    parser.add_argument("--port", type=int, default=8008)
    parser.add_argument("--backend", choices=BACKENDS, default="toy")
    parser.add_argument("--encoder-model", default=ServerConfig.encoder_model)
    parser.add_argument("--detector-model", default=ServerConfig.detector_model)
    parser.add_argument("--lvlm-model", default=ServerConfig.lvlm_model)
    return parser


def main(argv=None):
    import uvicorn

    args = build_parser().parse_args(argv)
    config = ServerConfig(
        port=args.port,
        backend=args.backend,
        encoder_model=args.encoder_model,
        detector_model=args.detector_model,
        lvlm_model=args.lvlm_model,
    )
    uvicorn.run(create_app(config), host=args.host, port=config.port, log_level="warning")


if __name__ == "__main__":
    main()
