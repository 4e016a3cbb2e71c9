"""Command-line driver: validate datasets, run offline evaluations, serve the API.

Exit codes: 0 success, 2 validation failure, 3 environment failure,
4 protocol or internal error.
"""

from __future__ import annotations

import argparse
import json
import socket
import sys
from pathlib import Path

from .algorithms import available_models, create_model
from .errors import (
    DegenerateSpan,
    EmptyDataset,
    HarnessError,
    InvalidConfig,
    InvalidDescriptor,
    SplitOutOfRange,
    TooManyRejections,
)
from .interactions import DatasetDescriptor, IngestResult, ingest
from .protocol import EvaluationEngine
from .runner import model_context, run_model
from .splitting import SplitConfig

_VALIDATION_ERRORS = (
    InvalidDescriptor,
    EmptyDataset,
    TooManyRejections,
    InvalidConfig,
    SplitOutOfRange,
    DegenerateSpan,
)

EXIT_OK = 0
EXIT_VALIDATION = 2
EXIT_ENVIRONMENT = 3
EXIT_INTERNAL = 4


def _parse_mapping(text: str, header: bool) -> dict[str, int | str]:
    """Parse "user=0,item=1,timestamp=3" into a column mapping."""
    mapping: dict[str, int | str] = {}
    for part in text.split(","):
        if "=" not in part:
            raise InvalidDescriptor(f"bad mapping entry {part!r}; expected key=column")
        key, _, column = part.partition("=")
        key = key.strip()
        column = column.strip()
        mapping[key] = column if header and not column.isdigit() else int(column)
    return mapping


def _parse_param(text: str) -> tuple[str, object]:
    if "=" not in text:
        raise InvalidConfig(f"bad --param {text!r}; expected name=value")
    name, _, raw = text.partition("=")
    value: object = raw
    for cast in (int, float):
        try:
            value = cast(raw)
            break
        except ValueError:
            continue
    return name.strip(), value


def _ingest_file(args: argparse.Namespace) -> IngestResult:
    path = Path(args.dataset if hasattr(args, "dataset") else args.file)
    if not path.is_file():
        raise FileNotFoundError(f"no such file: {path}")
    descriptor = DatasetDescriptor(
        name=path.name,
        source_uri=str(path),
        column_mapping=_parse_mapping(args.mapping, args.header),
        delimiter=args.delimiter,
        header=args.header,
    )
    with open(path, encoding="utf-8", newline="") as fh:
        return ingest(descriptor, fh)


def _add_dataset_flags(parser: argparse.ArgumentParser) -> None:
    parser.add_argument(
        "--mapping",
        default="user=0,item=1,timestamp=2",
        help="column mapping, e.g. user=0,item=1,timestamp=3",
    )
    parser.add_argument("--delimiter", default="\t", help="field delimiter (default tab)")
    parser.add_argument(
        "--header", action="store_true", help="first row is a header, map by column name"
    )


def _cmd_validate(args: argparse.Namespace) -> int:
    result = _ingest_file(args)
    span = result.log.span
    print(f"accepted: {result.n_accepted}")
    print(f"rejected: {result.n_rejected}")
    print(f"users: {len(result.log.user_ids)}")
    print(f"items: {len(result.log.item_ids)}")
    assert span is not None
    print(f"span: {span[0]}..{span[1]}")
    for rejection in result.rejections:
        print(f"  line {rejection.line_number}: {rejection.reason}")
    return EXIT_OK


def _on_off(value: str) -> bool:
    if value not in ("on", "off"):
        raise argparse.ArgumentTypeError("expected on or off")
    return value == "on"


def _build_config(args: argparse.Namespace) -> SplitConfig:
    """Merge --config file values with explicit flags; flags win."""
    doc: dict = {}
    if args.config:
        try:
            doc = json.loads(Path(args.config).read_text(encoding="utf-8"))
        except json.JSONDecodeError as exc:
            raise InvalidConfig(f"config file is not valid JSON: {exc}") from exc
        if not isinstance(doc, dict):
            raise InvalidConfig("config file must hold a flat JSON object")
    if args.split_t is not None:
        doc["t_background_end"] = args.split_t
    if args.windows is not None:
        doc["n_windows"] = args.windows
    if args.n_max is not None:
        doc["n_max_requests_per_user"] = args.n_max
    if args.k is not None:
        doc["k_values"] = [int(k) for k in args.k.split(",") if k]
    if args.unknown_users is not None:
        doc["include_unknown_users"] = args.unknown_users
    if args.unknown_items is not None:
        doc["include_unknown_items"] = args.unknown_items
    if "t_background_end" not in doc:
        raise InvalidConfig("missing --split-t (or t_background_end in --config)")
    if "n_windows" not in doc:
        raise InvalidConfig("missing --windows (or n_windows in --config)")
    return SplitConfig.from_flat_dict(doc)


def _cmd_run(args: argparse.Namespace) -> int:
    if args.model not in available_models():
        raise InvalidConfig(
            f"unknown model {args.model!r}; available: {', '.join(available_models())}"
        )
    result = _ingest_file(args)
    config = _build_config(args)
    params = dict(_parse_param(p) for p in args.param)

    engine = EvaluationEngine(result.log, config)
    # Instantiate before registering so a bad parameter fails fast.
    create_model(args.model, params, model_context(engine))

    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)

    def progress(done: int, total: int) -> None:
        print(f"window {done}/{total} released", file=sys.stderr)

    run_id = run_model(engine, args.model, params, on_window_done=progress)
    report = engine.get_report(run_id)

    (out_dir / "report.json").write_text(report.to_json(), encoding="utf-8")
    (out_dir / "report.csv").write_text(report.to_csv(), encoding="utf-8")
    (out_dir / "series.csv").write_text(report.series_csv(), encoding="utf-8")
    print(f"report written to {out_dir}")
    for metric in report.macro:
        for k, value in sorted(report.macro[metric].items(), key=lambda kv: int(kv[0])):
            micro = report.micro[metric][k]
            print(f"{metric}@{k}: macro={value:.5f} micro={micro:.5f}")
    return EXIT_OK


def _cmd_serve(args: argparse.Namespace) -> int:
    from .service import Settings, create_app

    settings = Settings.from_env()
    if args.host:
        settings.host = args.host
    if args.port is not None:
        settings.port = args.port
    if args.data_dir:
        settings.data_dir = args.data_dir

    probe = socket.socket(socket.AF_INET, socket.SOCK_STREAM)
    try:
        probe.bind((settings.host, settings.port))
    except OSError as exc:
        print(f"cannot bind {settings.host}:{settings.port}: {exc}", file=sys.stderr)
        return EXIT_ENVIRONMENT
    finally:
        probe.close()

    import uvicorn

    uvicorn.run(create_app(settings), host=settings.host, port=settings.port)
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="nextbatch",
        description="Sliding-window next-batch evaluation for incremental recommenders.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p_validate = sub.add_parser("validate-dataset", help="parse a dataset file and report stats")
    p_validate.add_argument("file")
    _add_dataset_flags(p_validate)
    p_validate.set_defaults(func=_cmd_validate)

    p_run = sub.add_parser("run", help="evaluate a built-in model over a dataset")
    p_run.add_argument("--dataset", required=True, help="interaction file")
    _add_dataset_flags(p_run)
    p_run.add_argument("--config", help="JSON file with split settings (flags override)")
    p_run.add_argument("--split-t", type=int, default=None, help="background/window boundary")
    p_run.add_argument("--windows", type=int, default=None, help="number of windows")
    p_run.add_argument("--n-max", type=int, default=None, help="max requests per user per window")
    p_run.add_argument("--k", default=None, help="comma list of cutoffs, e.g. 5,10,20")
    p_run.add_argument("--unknown-users", type=_on_off, default=None, metavar="on|off")
    p_run.add_argument("--unknown-items", type=_on_off, default=None, metavar="on|off")
    p_run.add_argument("--model", required=True, help="built-in model name")
    p_run.add_argument(
        "--param", action="append", default=[], help="model parameter name=value (repeatable)"
    )
    p_run.add_argument("--out", required=True, help="output directory for report files")
    p_run.set_defaults(func=_cmd_run)

    p_serve = sub.add_parser("serve", help="start the HTTP service")
    p_serve.add_argument("--host", default=None)
    p_serve.add_argument("--port", type=int, default=None)
    p_serve.add_argument("--data-dir", default=None)
    p_serve.set_defaults(func=_cmd_serve)

    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except _VALIDATION_ERRORS as exc:
        print(f"error [{exc.code}]: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    except (FileNotFoundError, PermissionError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_ENVIRONMENT
    except HarnessError as exc:
        print(f"error [{exc.code}]: {exc}", file=sys.stderr)
        return EXIT_INTERNAL
    except Exception as exc:
        print(f"internal error: {exc}", file=sys.stderr)
        return EXIT_INTERNAL


if __name__ == "__main__":
    sys.exit(main())
