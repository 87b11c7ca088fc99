"""Batch command line: ``python -m mmreg <command> ...``.

Exit status is 0 on success, 1 for invalid input and 2 for numerical
failures. Diagnostics go to stderr, one ``key=value`` line each.
"""

import argparse
import json
import logging
import sys
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path

from .biomarkers import load_regions, suvr
from .errors import MMRegError, NumericalError
from .infer import InferenceConfig
from .phantom import PhantomSpec
from .pipeline import (PairError, bench_csv, bench_rows, env_jobs, kv, load_manifest, load_solution,
                       parse_outliers, register_session, resample_session, synth_to_disk,
                       write_registration)
from .volio import average_frames, read_nifti

log = logging.getLogger("mmreg")

EXIT_OK, EXIT_INVALID, EXIT_NUMERICAL = 0, 1, 2


def exit_code(exc):
    cause = exc.cause if isinstance(exc, PairError) else exc
    if isinstance(cause, NumericalError):
        return EXIT_NUMERICAL
    return EXIT_INVALID


def report(exc, **context):
    fields = dict(context)
    if isinstance(exc, PairError):
        fields["pair"] = f"{exc.pair[0]}->{exc.pair[1]}"
        fields["error"] = type(exc.cause).__name__
        fields["message"] = str(exc.cause)
    else:
        fields["error"] = type(exc).__name__
        fields["message"] = str(exc)
    log.error(kv(**fields))


def cmd_register(args):
    cfg = InferenceConfig(b_ratio=args.b_ratio, hard_center=args.center == "hard")
    jobs = env_jobs(args.jobs)
    status = EXIT_OK

    def one(path):
        try:
            manifest = load_manifest(path)
            reg = register_session(manifest, cfg, args.pairs, jobs)
            root = write_registration(reg, args.out)
            log.info(kv(event="registered", session=manifest.session_id, out=root,
                        objective=f"{reg.solution.objective:.6g}", converged=reg.solution.converged))
            return EXIT_OK
        except (MMRegError, OSError) as exc:
            report(exc, event="register_failed", manifest=path)
            return exit_code(exc)

    with ThreadPoolExecutor(max_workers=jobs) as pool:
        for code in pool.map(one, args.manifest):
            status = max(status, code)
    return status


def cmd_resample(args):
    manifest = load_manifest(args.manifest)
    template, latents = load_solution(args.solution)
    written = resample_session(manifest, template, latents, args.out, args.method)
    log.info(kv(event="resampled", session=manifest.session_id, modalities=",".join(written)))
    return EXIT_OK


def cmd_suvr(args):
    pet = read_nifti(args.pet)
    if pet.frames > 1:
        pet = average_frames(pet)
    seg = read_nifti(args.seg, labels=True)
    regions = load_regions(args.regions)
    session = args.session or Path(args.pet).name.split(".")[0]
    suvr(pet, seg, regions, session=session).to_csv(args.out)
    return EXIT_OK


def cmd_synth(args):
    spec = PhantomSpec()
    if args.spec:
        spec = PhantomSpec.from_dict(json.loads(Path(args.spec).read_text(encoding="utf-8")))
    session = synth_to_disk(spec, args.out, args.session_id)
    log.info(kv(event="synthesized", out=args.out, modalities=",".join(session.modalities)))
    return EXIT_OK


def cmd_bench(args):
    rows = bench_rows(args.n, args.noise, parse_outliers(args.outliers), args.reps, args.seed)
    text = bench_csv(rows)
    with open(args.out, "w", newline="", encoding="utf-8") as f:
        f.write(text)
    return EXIT_OK


def build_parser():
    p = argparse.ArgumentParser(prog="mmreg", description="Groupwise multimodal rigid registration.")
    p.add_argument("-v", "--verbose", action="store_true", help="also log progress lines")
    sub = p.add_subparsers(dest="command", required=True)

    r = sub.add_parser("register", help="estimate latent transforms for one or more sessions")
    r.add_argument("--manifest", action="append", required=True, help="session manifest (repeatable)")
    r.add_argument("--out", required=True)
    r.add_argument("--pairs", default="all", help='"all" or a list like T1w-PET,PET-fMRI')
    r.add_argument("--center", choices=("soft", "hard"), default="soft")
    r.add_argument("--b-ratio", type=float, default=1.0)
    r.add_argument("--jobs", type=int, default=1, help="concurrent sessions (JUMP_JOBS overrides)")
    r.set_defaults(func=cmd_register)

    s = sub.add_parser("resample", help="write a session on its template grid")
    s.add_argument("--manifest", required=True)
    s.add_argument("--solution", required=True)
    s.add_argument("--out", required=True)
    s.add_argument("--method", choices=("trilinear", "nearest"), default="trilinear")
    s.set_defaults(func=cmd_resample)

    q = sub.add_parser("suvr", help="regional SUVr table")
    q.add_argument("--pet", required=True)
    q.add_argument("--seg", required=True)
    q.add_argument("--regions", help="region JSON; defaults to the bundled mapping")
    q.add_argument("--session", help="session column value; defaults to the PET file stem")
    q.add_argument("--out", required=True)
    q.set_defaults(func=cmd_suvr)

    y = sub.add_parser("synth", help="render a synthetic session")
    y.add_argument("--spec", help="phantom spec JSON; defaults are used when omitted")
    y.add_argument("--out", required=True)
    y.add_argument("--session-id")
    y.set_defaults(func=cmd_synth)

    b = sub.add_parser("bench", help="compare estimators on synthetic observations")
    b.add_argument("--n", type=int, default=4)
    b.add_argument("--noise", type=float, default=0.0)
    b.add_argument("--outliers", default="", help="REF-TGT:PARAM:DELTA,... (PARAM 0-5 or w1..u3)")
    b.add_argument("--reps", type=int, default=100)
    b.add_argument("--seed", type=int, default=0)
    b.add_argument("--out", required=True)
    b.set_defaults(func=cmd_bench)
    return p


def _configure_logging(verbose):
    handler = logging.StreamHandler(sys.stderr)
    handler.setFormatter(logging.Formatter("level=%(levelname)s %(message)s"))
    log.handlers[:] = [handler]
    log.setLevel(logging.INFO if verbose else logging.WARNING)
    log.propagate = False


def main(argv=None):
    args = build_parser().parse_args(argv)
    _configure_logging(args.verbose)
    try:
        return args.func(args)
    except MMRegError as exc:
        report(exc, event=f"{args.command}_failed")
        return exit_code(exc)
    except (OSError, json.JSONDecodeError) as exc:
        report(exc, event=f"{args.command}_failed")
        return EXIT_INVALID


if __name__ == "__main__":
    sys.exit(main())
