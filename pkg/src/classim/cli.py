"""Command-line interface.

Every command is deterministic given its inputs and ``--seed``; JSON outputs
embed the seed and the numeric settings used. Exit codes: 0 success,
1 invalid input, 2 solver failure, 3 size cap exceeded.

Environment: ``CLASSIM_THREADS`` caps BLAS threads (effective when set
before numpy is first imported) and ``CLASSIM_CHECKPOINT_DIR`` sets where
witness checkpoints go.
"""
import os

if os.environ.get("CLASSIM_THREADS"):
    for _var in ("OMP_NUM_THREADS", "OPENBLAS_NUM_THREADS", "MKL_NUM_THREADS"):
        os.environ.setdefault(_var, os.environ["CLASSIM_THREADS"])

import argparse
import csv
import json
import math
import sys

import numpy as np

from classim import analytic, kernels, simulation, states, steering, witness
from classim.errors import ClassimError, ValidationError

EXIT_OK = 0
SWEEP_COLUMNS = ("param", "v_star", "residual", "gap", "seed")
VERIFY_COLUMNS = ("check", "expected", "got", "tolerance", "pass")


def _write_json(data, path):
    if path in (None, "-"):
        json.dump(data, sys.stdout, indent=1, ensure_ascii=False)
        sys.stdout.write("\n")
        return
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(data, fh, indent=1, ensure_ascii=False)


def _load_set(path):
    return states.StateSet.load(path)


# ---------------------------------------------------------------- gen

def cmd_gen(args):
    if args.kind == "bb84":
        st = states.gen_bb84()
    elif args.kind == "mub":
        st = states.gen_mub_states(args.d, args.n)
    elif args.kind == "sic":
        st = states.gen_sic(args.d)
    elif args.kind == "pair":
        st = states.gen_pair_maxcoherent()
    else:
        if not args.input:
            raise ValidationError("gen file needs --input")
        st = states.StateSet.load(args.input, repair=args.repair)
    if args.extend:
        st = states.extend_set(st)
    if args.noise is not None:
        st = states.apply_isotropic_noise(st, args.noise)
    if args.output:
        st.save(args.output)
    print(f"d={st.dim} m={st.m} labels={' '.join(st.labels)}")
    return EXIT_OK


# ---------------------------------------------------------------- analytic

def cmd_analytic(args):
    d = args.d
    r = d if args.r is None else args.r
    rows = [analytic.bound_result1(d, r)]
    if args.s is not None:
        rows.append(analytic.bound_result1_subspace(d, args.s, r))
    if args.M is not None:
        rows.append(analytic.bound_result3(d, args.M, r))
    print(f"{'bound':<18}{'d':>3}{'r':>3}{'s':>4}{'M':>4}  v")
    for b in rows:
        s = "-" if b.s is None else b.s
        mm = "-" if b.M is None else b.M
        print(f"{b.kind:<18}{b.d:>3}{b.r:>3}{s:>4}{mm:>4}  {b.v:.4f}")
    if args.json:
        _write_json({"bounds": [b.to_dict() for b in rows]}, args.json)
    return EXIT_OK


# ---------------------------------------------------------------- simulate

def parse_device_spec(spec, d, r, seed):
    """Devices from ``random:N``, ``bases-model:M:r``, ``mub-devices`` or ``file:PATH``."""
    kind, _, rest = spec.partition(":")
    try:
        if kind == "random":
            return simulation.random_device_family(d, r, int(rest), seed)
        if kind == "bases-model":
            m_str, _, r_str = rest.partition(":")
            rr = int(r_str) if r_str else r
            bases = states.gen_mub_bases(d)[: int(m_str)]
            return analytic.build_bases_model(bases, rr).devices
        if kind == "mub-devices":
            return simulation.devices_from_bases([b.basis() for b in states.gen_mub_bases(d)], r)
        if kind == "file":
            devs = simulation.load_devices(rest)
            if any(dev.dim != d for dev in devs):
                raise ValidationError(f"devices in {rest} do not have dimension {d}")
            return devs
    except ValueError as exc:
        if isinstance(exc, ValidationError):
            raise
        raise ValidationError(f"bad device spec {spec!r}: {exc}") from exc
    raise ValidationError(f"unknown device spec {spec!r}")


def _simulate_once(st, spec, args):
    r = st.dim if args.r is None else args.r
    devices = parse_device_spec(spec, st.dim, r, args.seed)
    if args.refine:
        return simulation.refine_devices(st, devices, args.refine, args.step, args.seed,
                                         args.mode, args.cap)
    return simulation.simulate(st, devices, args.cap, description=spec)


def cmd_simulate(args):
    st = _load_set(args.set)
    config = {"devices": args.devices, "r": args.r, "refine": args.refine, "step": args.step,
              "mode": args.mode, "cap": args.cap}
    if args.sweep:
        kind = args.devices.partition(":")[0]
        if kind != "random":
            raise ValidationError("--sweep varies N in random:N device specs")
        rows = []
        for n in (int(t) for t in args.sweep.split(",")):
            res = _simulate_once(st, f"random:{n}", args)
            rows.append({"param": n, "v_star": res.visibility, "residual": res.residual,
                         "gap": res.gap, "seed": args.seed})
            print(f"N={n} v* = {res.visibility:.6f}")
        out = open(args.csv, "w", newline="", encoding="utf-8") if args.csv else sys.stdout
        try:
            writer = csv.DictWriter(out, fieldnames=SWEEP_COLUMNS)
            writer.writeheader()
            writer.writerows(rows)
        finally:
            if args.csv:
                out.close()
        return EXIT_OK
    res = _simulate_once(st, args.devices, args)
    print(f"v* = {res.visibility:.6f}  (residual {res.residual:.2e}, gap {res.gap:.2e}, "
          f"{res.model.n_devices} devices used, seed {args.seed})")
    if args.output:
        data = res.to_dict()
        data.update({"seed": args.seed, "config": config})
        _write_json(data, args.output)
    return EXIT_OK


# ---------------------------------------------------------------- witness

def _checkpoint_path(args, tag):
    if args.checkpoint:
        return args.checkpoint
    folder = os.environ.get("CLASSIM_CHECKPOINT_DIR")
    if folder:
        os.makedirs(folder, exist_ok=True)
        return os.path.join(folder, f"witness-{tag}.json")
    return None


def cmd_witness(args):
    target = None
    if args.spec == "mub":
        w = witness.mub_witness(args.d, args.n)
        target = states.gen_mub_states(args.d, args.n)
        tag = f"mub-d{args.d}-n{args.n}"
    elif args.spec.startswith("file:"):
        w = witness.Witness.load(args.spec[5:])
        tag = w.fingerprint()
    else:
        raise ValidationError(f"unknown witness spec {args.spec!r}")
    report = {"seed": args.seed, "witness": repr(w)}
    if args.save_witness:
        w.save(args.save_witness)
    if args.eval:
        st = _load_set(args.eval)
        val = witness.evaluate(w, st)
        report["value"] = val
        print(f"W = {val:.6f}")
        target = target if target is not None else st
    if args.bound or args.critical:
        ckpt = _checkpoint_path(args, tag)
        if ckpt and not args.resume and os.path.exists(ckpt):
            os.remove(ckpt)

        def progress(done, total):
            if args.verbose:
                print(f"  {done}/{total} strategies", file=sys.stderr)

        b = witness.classical_bound(w, symmetry_reduce=args.symmetry, cap=args.cap,
                                    batch_size=args.batch, checkpoint=ckpt, progress=progress)
        report["bound"] = b.to_dict()
        print(f"certified classical bound (upper): beta = {b.beta:.6f} +- {b.tolerance:.1e} "
              f"[{b.method}, {b.n_strategies} strategies, argmax {list(b.argmax)}]")
        if args.critical:
            if target is None:
                raise ValidationError("--critical needs a target set (use --eval)")
            v = witness.critical_visibility(w, target, b.beta)
            report["critical_visibility"] = v
            print(f"critical visibility v = {v:.6f}")
    if args.output:
        _write_json(report, args.output)
    return EXIT_OK


# ---------------------------------------------------------------- steer / jm

def cmd_steer(args):
    ineq = steering.SteeringInequality.load(args.inequality)
    w, b = steering.steering_to_witness(ineq)
    print(f"zeta = {b.beta:.6f}  [{b.method}, argmax {list(b.argmax)}]")
    if args.output:
        w.save(args.output)
    if args.eval:
        print(f"W = {witness.evaluate(w, _load_set(args.eval)):.6f}")
    return EXIT_OK


def cmd_jm(args):
    st = _load_set(args.set)
    if args.threshold:
        v = steering.jm_threshold(st, width=args.width)
        print(f"JM threshold v = {v:.6f} (width {args.width:g})")
    elif args.v is not None:
        ok = steering.jm_binarized_feasible(st, args.v)
        print(f"v = {args.v:g}: {'feasible' if ok else 'infeasible'}")
    else:
        raise ValidationError("jm needs --v or --threshold")
    return EXIT_OK


# ---------------------------------------------------------------- verify

def _check(name, expected, got, tol, ok=None):
    passed = abs(got - expected) <= tol if ok is None else ok
    return {"check": name, "expected": expected, "got": got, "tolerance": tol, "pass": bool(passed)}


def _verify_haar(seed, n):
    rows = []
    for d in range(2, 5):
        for r in range(2, d + 1):
            mean, se = analytic.mc_mean_max_overlap(d, r, n, seed)
            rows.append(_check(f"haar_mean d={d} r={r}", analytic.harmonic(r) / d, mean, 4 * se))
    for d in (2, 3):
        dist = analytic.mc_verify_result1(np.diag([1.0] + [0.0] * (d - 1)), d, d, n, seed)
        rows.append(_check(f"haar_model d={d}", 0.0, dist, 0.02, ok=dist <= 0.02))
    return rows


def _verify_table1():
    rows = []
    for d, v in ((2, 0.5), (3, 0.41667), (4, 0.36111)):
        rows.append(_check(f"result1 d={d}", v, analytic.bound_result1(d, d).v, 1e-4))
    for mm, v in ((2, 0.5), (3, 0.3333), (4, 0.25)):
        rows.append(_check(f"result3 d=3 M={mm}", v, analytic.bound_result3(3, mm, 3).v, 1e-4))
    return rows


def _verify_witness():
    w = witness.mub_witness(3, 2)
    b = witness.classical_bound(w)
    v = witness.critical_visibility(w, states.gen_mub_states(3, 2), b.beta)
    return [_check("mub witness N=2 bound", 4.6667, b.beta, 1e-3),
            _check("mub witness N=2 critical v", 0.6667, v, 2e-3)]


def _verify_jm():
    zx = states.StateSet(np.array([states.proj([1, 0]), states.proj(np.array([1, 1]) / math.sqrt(2))]))
    t = steering.jm_threshold(zx)
    bb84_ok = steering.jm_binarized_feasible(states.gen_bb84(), 1 / math.sqrt(2))
    mub_ok = steering.jm_binarized_feasible(states.gen_mub_states(3, 2), 0.5)
    return [_check("jm Z/X threshold", 1 / math.sqrt(2), t, 1e-4),
            _check("jm bb84 at 1/sqrt2", 1.0, float(bb84_ok), 0.0, ok=bb84_ok),
            _check("jm 2-MUB d=3 at 0.5", 1.0, float(mub_ok), 0.0, ok=mub_ok)]


def cmd_verify(args):
    suites = ("haar", "table1", "witness", "jm") if args.suite == "all" else (args.suite,)
    rows = []
    for s in suites:
        if s == "haar":
            rows += _verify_haar(args.seed, args.samples)
        elif s == "table1":
            rows += _verify_table1()
        elif s == "witness":
            rows += _verify_witness()
        else:
            rows += _verify_jm()
    out = open(args.csv, "w", newline="", encoding="utf-8") if args.csv else sys.stdout
    try:
        writer = csv.DictWriter(out, fieldnames=VERIFY_COLUMNS)
        writer.writeheader()
        writer.writerows(rows)
    finally:
        if args.csv:
            out.close()
    failed = [r["check"] for r in rows if not r["pass"]]
    print(f"{len(rows) - len(failed)}/{len(rows)} checks passed (seed {args.seed})", file=sys.stderr)
    return EXIT_OK if not failed else 1


# ---------------------------------------------------------------- parser

def build_parser():
    p = argparse.ArgumentParser(prog="classim",
                                description="Classical simulability of finite sets of quantum states.")
    p.add_argument("--seed", type=int, default=0, help="random seed (echoed in outputs)")
    p.add_argument("--backend-info", action="store_true", help="print the kernel backend and exit")
    sub = p.add_subparsers(dest="command")

    g = sub.add_parser("gen", help="generate a state set file")
    g.add_argument("kind", choices=["bb84", "mub", "sic", "pair", "file"])
    g.add_argument("--d", type=int, default=3)
    g.add_argument("--n", type=int, default=2, help="number of bases for mub")
    g.add_argument("--input", help="source file for kind=file")
    g.add_argument("--repair", action="store_true", help="repair slightly non-Hermitian input")
    g.add_argument("--extend", action="store_true", help="append (I - rho)/(d - 1) states")
    g.add_argument("--noise", type=float, help="apply isotropic noise with this visibility")
    g.add_argument("-o", "--output")
    g.set_defaults(func=cmd_gen)

    a = sub.add_parser("analytic", help="closed-form visibility bounds")
    a.add_argument("--d", type=int, required=True)
    a.add_argument("--r", type=int)
    a.add_argument("--s", type=int, help="dimension of the spanned subspace")
    a.add_argument("--M", type=int, help="number of bases")
    a.add_argument("--json", help="also write the bounds as JSON")
    a.set_defaults(func=cmd_analytic)

    s = sub.add_parser("simulate", help="visibility LP over a device family")
    s.add_argument("set")
    s.add_argument("--devices", required=True,
                   help="random:N, bases-model:M:r, mub-devices or file:PATH")
    s.add_argument("--r", type=int, help="subset size (default d)")
    s.add_argument("--refine", type=int, default=0, help="perturbation iterations")
    s.add_argument("--step", type=float, default=0.1)
    s.add_argument("--mode", choices=["local", "global"], default="local")
    s.add_argument("--cap", type=int, default=simulation.VARIABLE_CAP)
    s.add_argument("--sweep", help="comma-separated N values for random:N")
    s.add_argument("--csv", help="sweep CSV path (default stdout)")
    s.add_argument("-o", "--output")
    s.set_defaults(func=cmd_simulate)

    w = sub.add_parser("witness", help="evaluate witnesses and compute classical bounds")
    w.add_argument("spec", help="mub or file:PATH")
    w.add_argument("--d", type=int, default=3)
    w.add_argument("--n", type=int, default=2)
    w.add_argument("--bound", action="store_true")
    w.add_argument("--critical", action="store_true")
    w.add_argument("--eval", help="state set to evaluate on")
    w.add_argument("--symmetry", action=argparse.BooleanOptionalAction, default=True,
                   help="one strategy per relabeling orbit")
    w.add_argument("--cap", type=int, default=witness.STRATEGY_CAP)
    w.add_argument("--batch", type=int, default=witness.BATCH_SIZE)
    w.add_argument("--checkpoint", help="checkpoint file for long runs")
    w.add_argument("--resume", action="store_true", help="continue from an existing checkpoint")
    w.add_argument("--save-witness", help="write the witness JSON")
    w.add_argument("--verbose", action="store_true")
    w.add_argument("-o", "--output")
    w.set_defaults(func=cmd_witness)

    st = sub.add_parser("steer", help="convert a qubit steering inequality to a witness")
    st.add_argument("inequality")
    st.add_argument("--eval")
    st.add_argument("-o", "--output", help="write the witness JSON")
    st.set_defaults(func=cmd_steer)

    j = sub.add_parser("jm", help="joint measurability of binarized noisy states")
    j.add_argument("set")
    j.add_argument("--v", type=float)
    j.add_argument("--threshold", action="store_true")
    j.add_argument("--width", type=float, default=steering.JM_WIDTH)
    j.set_defaults(func=cmd_jm)

    v = sub.add_parser("verify", help="run built-in consistency checks")
    v.add_argument("suite", choices=["haar", "table1", "witness", "jm", "all"])
    v.add_argument("--samples", type=int, default=100_000)
    v.add_argument("--csv")
    v.set_defaults(func=cmd_verify)
    return p


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    if args.backend_info:
        print(f"kernels: {kernels.BACKEND}")
        return EXIT_OK
    if args.command is None:
        parser.print_help()
        return 1
    try:
        return args.func(args)
    except ClassimError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.exit_code
    except (OSError, json.JSONDecodeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
