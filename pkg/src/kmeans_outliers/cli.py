"""Command-line front end.

Each subcommand is a thin client of the HTTP service: it loads local files,
ships one JSON request, and writes the JSON (or CSV) response.  By default
the service runs in-process; ``--server URL`` targets a remote instance.

Exit codes: 0 success, 2 invalid configuration or arguments, 3 data error,
4 infeasible instance (e.g. ``k + z >= n``).
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from .core import DataError
from .pipeline import (
    ConfigError,
    emit_results,
    load_csv,
    report_from_dict,
    reports_to_csv,
    reports_to_json_lines,
    resolve_z,
)

__all__ = ["main"]

_EXIT_OK = 0
_EXIT_CONFIG = 2
_EXIT_DATA = 3
_EXIT_INFEASIBLE = 4

_STATUS_EXIT = {400: _EXIT_DATA, 409: _EXIT_INFEASIBLE, 422: _EXIT_CONFIG}


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="kmeans-outliers",
        description="sampling-based k-means with outliers",
    )
    parser.add_argument("--server", default=None,
                        help="base URL of a running service (default: in-process)")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, *, needs_input=True):
        if needs_input:
            p.add_argument("--input", required=True, help="CSV file of points")
        p.add_argument("--seed", type=int, default=0)
        p.add_argument("--out", default=None, help="output file (default: stdout)")

    p = sub.add_parser("seed", help="penalized overseeding")
    common(p)
    p.add_argument("--ell", type=int, required=True)
    p.add_argument("--theta", type=float, default=None,
                   help="penalty threshold (default: no clamping)")
    p.add_argument("--metropolized", action="store_true")
    p.add_argument("--mh-steps", type=int, default=100)

    p = sub.add_parser("local-search", help="penalized local search over the guess ladder")
    common(p)
    p.add_argument("--k", type=int, required=True)
    p.add_argument("--z", required=True)
    p.add_argument("--eps", type=float, default=0.5)

    p = sub.add_parser("fast", help="metropolized sampling pipeline")
    common(p)
    p.add_argument("--k", type=int, required=True)
    p.add_argument("--z", required=True)
    p.add_argument("--a", type=float, default=2.0)

    p = sub.add_parser("distributed", help="coordinator-model solve")
    common(p)
    p.add_argument("--k", type=int, required=True)
    p.add_argument("--z", required=True)
    p.add_argument("--eps", type=float, default=0.5)
    p.add_argument("--machines", type=int, default=10)
    p.add_argument("--mode", default="guha_simple",
                   choices=("guha_simple", "guha_refined", "kmeans_par"))

    p = sub.add_parser("hardness", help="query-oracle budget harness")
    common(p, needs_input=False)
    p.add_argument("--n", type=int, required=True)
    p.add_argument("--k", type=int, required=True)
    p.add_argument("--z", type=int, required=True)
    p.add_argument("--budget", type=int, required=True)
    p.add_argument("--strategy", default="fast",
                   choices=("uniform", "exhaustive", "fast"))
    p.add_argument("--mass-mult", type=float, default=100.0)
    p.add_argument("--outlier-mult", type=float, default=2.0)

    p = sub.add_parser("experiment", help="seed x k x threshold-grid batch")
    p.add_argument("--input", required=True, help="CSV file of points")
    p.add_argument("--config", required=True, help="key = value config file")
    p.add_argument("--theta-grid", default=None,
                   help="override the config grid (geometric | ladder | comma list)")
    p.add_argument("--threads", type=int, default=1)
    p.add_argument("--format", default="json", choices=("json", "csv"))
    p.add_argument("--out", default=None)

    p = sub.add_parser("score", help="audit emitted reports against the data")
    p.add_argument("--input", required=True, help="CSV file of points")
    p.add_argument("--reports", required=True, help="JSON-lines report file")
    p.add_argument("--out", default=None)
    return parser


def _client(server: str | None):
    if server:
        import httpx

        return httpx.Client(base_url=server)
    from fastapi.testclient import TestClient

    from .service import create_app

    return TestClient(create_app(), raise_server_exceptions=False)


def _emit(text: str, out: str | None) -> None:
    if out is None:
        sys.stdout.write(text if text.endswith("\n") else text + "\n")
    else:
        Path(out).write_text(text, newline="")


def _parse_z(raw) -> float | int:
    text = str(raw)
    try:
        return int(text)
    except ValueError:
        pass
    try:
        return float(text)
    except ValueError:
        raise ConfigError(f"--z: expected a count or fraction, got {text!r}") from None


def _request_body(args) -> tuple[str, dict]:
    """Endpoint path and JSON payload for one parsed command line."""
    if args.command == "hardness":
        return "/hardness", {
            "n": args.n, "k": args.k, "z": args.z, "budget": args.budget,
            "strategy": args.strategy, "seed": args.seed,
            "mass_mult": args.mass_mult, "outlier_mult": args.outlier_mult,
        }

    data = load_csv(args.input)
    points = data.coords.tolist()
    if args.command == "seed":
        body = {"points": points, "ell": args.ell, "seed": args.seed,
                "metropolized": args.metropolized, "mh_steps": args.mh_steps}
        if args.theta is not None:
            body["theta"] = args.theta
        return "/seed", body

    z = resolve_z(_parse_z(args.z), data.n)
    if args.command == "local-search":
        return "/local-search", {"points": points, "k": args.k, "z": z,
                                 "eps": args.eps, "seed": args.seed}
    if args.command == "fast":
        return "/fast", {"points": points, "k": args.k, "z": z,
                         "seed": args.seed, "a": args.a}
    if args.command == "distributed":
        return "/distributed", {"points": points, "k": args.k, "z": z,
                                "eps": args.eps, "machines": args.machines,
                                "mode": args.mode, "seed": args.seed}
    raise AssertionError(f"unhandled command {args.command}")


def _override_grid(config_text: str, grid: str) -> str:
    lines = [ln for ln in config_text.splitlines()
             if ln.split("#", 1)[0].split("=", 1)[0].strip() != "theta_grid"]
    return "\n".join(lines) + f"\ntheta_grid = {grid}\n"


def _run_experiment_cmd(args, client) -> int:
    config_text = Path(args.config).read_text()
    if args.theta_grid is not None:
        config_text = _override_grid(config_text, args.theta_grid)
    data = load_csv(args.input)
    resp = client.post("/experiment", json={"points": data.coords.tolist(),
                                            "config": config_text,
                                            "threads": args.threads})
    if resp.status_code != 200:
        return _fail(resp)
    reports = [report_from_dict(d) for d in resp.json()["reports"]]
    if not reports:
        sys.stderr.write("error: every run failed; nothing to report\n")
        return _EXIT_INFEASIBLE
    if args.out is not None:
        emit_results(reports, args.format, args.out)
    else:
        text = (reports_to_csv(reports) if args.format == "csv"
                else reports_to_json_lines(reports))
        sys.stdout.write(text)
    return _EXIT_OK


def _run_score_cmd(args, client) -> int:
    data = load_csv(args.input)
    try:
        lines = Path(args.reports).read_text().splitlines()
    except OSError as exc:
        raise DataError(f"cannot read {args.reports}: {exc}") from None
    dicts = [json.loads(line) for line in lines if line.strip()]
    if not dicts:
        raise DataError(f"{args.reports}: no reports")
    resp = client.post("/score", json={"points": data.coords.tolist(),
                                       "reports": dicts})
    if resp.status_code != 200:
        return _fail(resp)
    body = resp.json()
    _emit(json.dumps(body, sort_keys=True, indent=2), args.out)
    return _EXIT_OK if body["all_ok"] else 1


def _fail(resp) -> int:
    try:
        detail = resp.json().get("detail", resp.text)
    except ValueError:
        detail = resp.text
    sys.stderr.write(f"error ({resp.status_code}): {detail}\n")
    return _STATUS_EXIT.get(resp.status_code, 1)


def main(argv=None) -> int:
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code) if exc.code else _EXIT_OK

    try:
        with _client(args.server) as client:
            if args.command == "experiment":
                return _run_experiment_cmd(args, client)
            if args.command == "score":
                return _run_score_cmd(args, client)
            path, body = _request_body(args)
            resp = client.post(path, json=body)
            if resp.status_code != 200:
                return _fail(resp)
            _emit(json.dumps(resp.json(), sort_keys=True, indent=2), args.out)
            return _EXIT_OK
    except DataError as exc:
        sys.stderr.write(f"error: {exc}\n")
        return _EXIT_DATA
    except ConfigError as exc:
        sys.stderr.write(f"error: {exc}\n")
        return _EXIT_CONFIG
    except OSError as exc:
        sys.stderr.write(f"error: {exc}\n")
        return _EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
