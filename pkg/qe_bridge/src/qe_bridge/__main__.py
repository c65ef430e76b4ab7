"""Run the service with uvicorn; model and port come from the environment."""

from __future__ import annotations

import os

import uvicorn

from .service import ENV_PORT, create_app


def main() -> None:
    port = int(os.environ.get(ENV_PORT, "8080"))
    uvicorn.run(create_app(), host="127.0.0.1", port=port)


if __name__ == "__main__":
    main()
