"""`lab` command line: run experiments from TOML configs, list, verify.

Exit codes: 0 ok, 1 an embedded acceptance check failed, 2 config or
runtime error.  The output root comes from --out, else the LAB_OUT_ROOT
environment variable, else the config's own out_dir.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from pathlib import Path

from .config import load_config
from .errors import LabError
from .experiments import list_experiments, run
from .io import sha256_file

OUT_ROOT_ENV = "LAB_OUT_ROOT"


def _cmd_run(args) -> int:
    out_root = args.out or os.environ.get(OUT_ROOT_ENV)
    try:
        cfg = load_config(args.config, overrides=args.set or (), out_root=out_root)
    except LabError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    try:
        manifest = run(cfg)
    except LabError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    print(f"experiment: {manifest.experiment}")
    print(f"status:     {manifest.status}")
    for check in manifest.checks:
        flag = "PASS" if check["passed"] else "FAIL"
        print(f"  [{flag}] {check['name']}: {check['detail']}")
    for out in manifest.outputs:
        print(f"  wrote {out['path']} ({out['sha256'][:12]})")
    print(f"manifest:   {cfg.out_dir / 'manifest.json'}")
    if manifest.status == "ok":
        return 0
    if manifest.status == "acceptance-fail":
        return 1
    return 2


def _cmd_list(_args) -> int:
    rows = list_experiments()
    name_w = max(len(r[0]) for r in rows)
    keys_w = max(len(r[1]) for r in rows)
    print(f"{'experiment':{name_w}}  {'required config':{keys_w}}  runtime")
    for name, keys, runtime in rows:
        print(f"{name:{name_w}}  {keys:{keys_w}}  {runtime}")
    return 0


def _cmd_verify(args) -> int:
    path = Path(args.manifest)
    try:
        manifest = json.loads(path.read_text())
    except (OSError, json.JSONDecodeError) as exc:
        print(f"error: cannot read manifest: {exc}", file=sys.stderr)
        return 2
    base = path.parent
    bad = 0
    for out in manifest.get("outputs", []):
        target = base / out["path"]
        if not target.exists():
            print(f"MISSING {out['path']}")
            bad += 1
            continue
        digest = sha256_file(target)
        if digest != out["sha256"]:
            print(f"CHANGED {out['path']}")
            bad += 1
        else:
            print(f"OK      {out['path']}")
    status = manifest.get("status", "unknown")
    print(f"recorded status: {status}")
    if bad:
        print(f"{bad} artifact(s) failed verification")
        return 1
    return 0


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="lab",
        description="DN-map inverse-potential laboratory on the unit cube")
    sub = parser.add_subparsers(dest="command", required=True)

    p_run = sub.add_parser("run", help="run an experiment from a TOML config")
    p_run.add_argument("config", help="path to the experiment config")
    p_run.add_argument("--set", action="append", metavar="KEY=VALUE",
                       help="override a scalar config key (dotted path)")
    p_run.add_argument("--out", help="output root directory "
                       f"(default: ${OUT_ROOT_ENV} or config out_dir)")
    p_run.set_defaults(fn=_cmd_run)

    p_list = sub.add_parser("list", help="list experiments and their needs")
    p_list.set_defaults(fn=_cmd_list)

    p_verify = sub.add_parser("verify", help="re-check output checksums of a run")
    p_verify.add_argument("manifest", help="path to a manifest.json")
    p_verify.set_defaults(fn=_cmd_verify)

    args = parser.parse_args(argv)
    return args.fn(args)


if __name__ == "__main__":
    raise SystemExit(main())
