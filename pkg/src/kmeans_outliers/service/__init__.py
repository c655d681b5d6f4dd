"""HTTP service exposing the solvers, the experiment runner, and the
query-oracle harness.  Run it with ``uvicorn kmeans_outliers.service:app``."""

from .app import app, create_app

__all__ = ["app", "create_app"]
