"""Command-line front end.

Exit status is 0 whenever the analysis ran, including "insecure" or
"abort" verdicts; 2 signals invalid input and 1 an I/O failure.
"""
from __future__ import annotations

import argparse
import csv
import io
import json
import sys
from typing import Any, Optional, Sequence

from . import __version__
from .attacks import (
    blinding_trigger_window,
    faked_state_simulate,
    reference_manipulation_scan,
    required_reference_power,
    splitting_attack_leak,
    usd_filter_success,
    usd_reveal_check,
)
from .config import RunConfig, validate
from .errors import DomainError, RegistryError, UnknownComponentError
from .keyrate import (
    DEFAULT_F_EC,
    FiniteKeyInputs,
    RateInputs,
    accepted_bit_prob,
    asymptotic_rate,
    binary_entropy,
    epsilon_total,
    finite_key_length,
    finite_key_terms,
    holevo_capacity,
)
from .linkbudget import load_chain, tha_required_photons, tha_required_power, tha_round_trip_loss
from .registry import STORE_ENV, Hardness, Layer, Risk, Store, report

DEFAULT_SEED = 0
DEFAULT_N_ROUNDS = 1_000_000


# ---------------------------------------------------------------- rendering

def _flatten(doc: Any, prefix: str = "") -> list[tuple[str, Any]]:
    if isinstance(doc, dict):
        out = []
        for k, v in doc.items():
            out += _flatten(v, f"{prefix}.{k}" if prefix else str(k))
        return out
    if isinstance(doc, list) and doc and isinstance(doc[0], dict):
        out = []
        for i, v in enumerate(doc):
            out += _flatten(v, f"{prefix}[{i}]")
        return out
    return [(prefix, doc)]


def _fmt_value(v: Any) -> str:
    if isinstance(v, float):
        return f"{v:.6g}"
    if isinstance(v, list):
        return "[" + ", ".join(_fmt_value(x) for x in v) + "]"
    if v is None:
        return "-"
    return str(v)


def render(doc: dict, fmt: str, schema: Optional[str] = None, table: Optional[list[dict]] = None) -> str:
    if schema:
        validate(doc, schema)
    if fmt == "json":
        return json.dumps(doc, indent=2, sort_keys=True) + "\n"
    if fmt == "csv":
        buf = io.StringIO()
        if table:
            w = csv.DictWriter(buf, fieldnames=list(table[0]), lineterminator="\n")
            w.writeheader()
            w.writerows(table)
        else:
            w = csv.writer(buf, lineterminator="\n")
            w.writerow(["key", "value"])
            w.writerows((k, v) for k, v in _flatten(doc))
        return buf.getvalue()
    rows = _flatten(doc)
    width = max(len(k) for k, _ in rows)
    return "\n".join(f"{k.ljust(width)}  {_fmt_value(v)}" for k, v in rows) + "\n"


# ---------------------------------------------------------------- commands

def cmd_keyrate(cfg: RunConfig, args: argparse.Namespace) -> dict:
    params = cfg.system_params()
    if "Q" not in cfg.rate:
        raise DomainError("config has no 'rate' block with Q")
    chi = holevo_capacity(params)
    P_B = accepted_bit_prob(params, cfg.rate.get("P_B"))
    f_ec = cfg.rate.get("f_EC", DEFAULT_F_EC)
    res = asymptotic_rate(RateInputs(nu_S=params.rep_rate, P_B=P_B, Q=cfg.rate["Q"], chi=chi, f_EC=f_ec))
    return {"command": "keyrate", "chi": chi, "P_B": P_B, "K": res.K, "bracket": res.bracket,
            "abort": res.abort, "Q": cfg.rate["Q"], "f_EC": f_ec, "nu_S": params.rep_rate}


def cmd_finite_key(cfg: RunConfig, args: argparse.Namespace) -> dict:
    fk_doc = cfg.finite_key
    if fk_doc is None:
        raise DomainError("config has no 'finite_key' block")
    chi = fk_doc["chi"] if "chi" in fk_doc else holevo_capacity(cfg.system_params())
    budget = cfg.epsilon_budget()
    fk = FiniteKeyInputs(n=fk_doc["n"], k=fk_doc["k"], Q=fk_doc["Q"], chi=chi,
                         f_EC=fk_doc.get("f_EC", DEFAULT_F_EC), budget=budget)
    l = finite_key_length(fk)
    eps_sec, eps_qkd = epsilon_total(budget)
    return {
        "command": "finite-key", "l": l, "abort": l <= 0, "eps_sec": eps_sec, "eps_QKD": eps_qkd,
        "epsilon": {"eps_s": budget.eps_s, "eps_EC": budget.eps_EC, "eps_PA": budget.eps_PA},
        "terms": finite_key_terms(fk), "n": fk.n, "k": fk.k, "Q": fk.Q, "chi": chi, "f_EC": fk.f_EC,
        "asymptotic_fraction": 1.0 - chi - fk.f_EC * binary_entropy(fk.Q) * (1.0 - fk.k / fk.n),
    }


def cmd_tha(cfg: RunConfig, args: argparse.Namespace) -> dict:
    chain_src = args.chain or cfg.tha.get("chain")
    reflector = args.reflector or cfg.tha.get("reflector")
    mu_out = args.mu_out if args.mu_out is not None else cfg.tha.get("mu_out")
    if not chain_src or not reflector or mu_out is None:
        raise DomainError("tha needs a chain, a reflector and mu_out (flags or config 'tha' block)")
    rep_rate, wavelength = 100e6, 1550e-9
    if cfg.system is not None:
        p = cfg.system_params()
        rep_rate, wavelength = p.rep_rate, p.wavelength
    rep_rate = args.rep_rate_hz or rep_rate
    wavelength = args.wavelength_m or wavelength
    chain = load_chain(chain_src)
    rt = tha_round_trip_loss(chain, reflector)
    return {"command": "tha", "chain": str(chain_src), "reflector": reflector, "round_trip_dB": rt,
            "photons_per_pulse": tha_required_photons(rt, mu_out),
            "watts": tha_required_power(rt, mu_out, rep_rate, wavelength),
            "mu_out": mu_out, "rep_rate_hz": rep_rate, "wavelength_m": wavelength}


def _seed(cfg: RunConfig, args: argparse.Namespace) -> int:
    if args.seed is not None:
        return args.seed
    return cfg.attack.get("seed", DEFAULT_SEED)


def cmd_attack(cfg: RunConfig, args: argparse.Namespace) -> tuple[dict, Optional[list[dict]]]:
    which = args.which
    a = cfg.attack
    if which == "usd":
        if args.m is not None:
            m = args.m
        elif cfg.system is not None:
            m = cfg.system_params().m
        else:
            raise DomainError("usd needs --m or a system block")
        doc = {"command": "attack", "attack": "usd", "seed": None, "m": m, "P_success": usd_filter_success(m)}
        if "p_usd" in a:
            p_det = a["p_det"] if "p_det" in a else accepted_bit_prob(cfg.system_params())
            doc["reveal"] = {"P_det": p_det, "P_USD": a["p_usd"],
                             "verdict": usd_reveal_check(p_det, a["p_usd"]).value}
        return doc, None
    if which == "blinding":
        b = cfg.blinding_params()
        m = cfg.system_params().m
        P_tr = a.get("P_tr_w", b.P_th)
        window = blinding_trigger_window(b)
        return {
            "command": "attack", "attack": "blinding", "seed": None,
            "window_w": list(window) if window else None, "window_empty": window is None,
            "P_tr_w": P_tr, "P_tr_in_window": bool(window and window[0] <= P_tr <= window[1]),
            "clicks_matched_phase": b.clicks(P_tr), "clicks_other_basis": b.clicks(P_tr / 2),
            "m": m, "P_ref_required_w": required_reference_power(P_tr, m),
        }, None
    if which == "splitting":
        seed = _seed(cfg, args)
        out = splitting_attack_leak(cfg.system_params(), cfg.require_attack("line_loss_db"),
                                    a.get("n_rounds", DEFAULT_N_ROUNDS), seed, workers=args.workers)
        return {"command": "attack", "attack": "splitting", "seed": seed, "outcome": out.to_dict()}, None
    if which == "faked-state":
        seed = _seed(cfg, args)
        kwargs = {k: a[key] for k, key in (("p_conclusive", "p_conclusive"), ("fill_power", "fill_power_w"),
                                           ("ref_acceptance", "ref_acceptance"), ("max_qber", "max_qber"))
                  if key in a}
        out = faked_state_simulate(
            cfg.system_params(), cfg.blinding_params(), cfg.require_attack("P_tr_w"),
            a.get("with_reference_monitoring", False), a.get("n_rounds", DEFAULT_N_ROUNDS), seed,
            workers=args.workers, **kwargs)
        return {"command": "attack", "attack": "faked-state", "seed": seed, "outcome": out.to_dict()}, None
    if which == "ref-scan":
        scan = reference_manipulation_scan(cfg.system_params(), cfg.require_attack("alpha_grid"),
                                           a.get("ref_drop_tolerance", 0.01))
        doc = {"command": "attack", "attack": "ref-scan", "seed": None, **scan.to_dict()}
        return doc, doc["rows"]
    raise DomainError(f"unknown attack {which!r}")


def cmd_registry(args: argparse.Namespace) -> str:
    store = Store(args.store)
    fmt = args.format
    if args.action == "report":
        reg = store.read()
        rep_fmt = "text" if fmt == "text" else fmt
        text = report(
            reg, rep_fmt,
            layer=Layer[args.layer] if args.layer else None,
            hardness=Hardness[args.hardness] if args.hardness else None,
            risk=Risk(args.risk) if args.risk else None,
        )
        if fmt == "json":
            validate(json.loads(text), "registry_report")
        return text
    with store.transaction() as reg:
        if args.action == "seed":
            recs = reg.seed_paper_table(overwrite=args.overwrite)
            doc = {"command": "registry", "action": "seed", "store": str(store.path), "count": len(recs)}
        else:
            rec = reg.set_hardness(args.id, Hardness[args.level], args.note or "",
                                   timestamp=args.timestamp, component=args.component)
            doc = {"command": "registry", "action": "set", "store": str(store.path),
                   "record": rec.to_dict(), "count": len(rec.hardness_history)}
    return render(doc, "text" if fmt == "csv" else fmt, "registry_action")


# ---------------------------------------------------------------- parser

def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", metavar="PATH", help="JSON run configuration")
    common.add_argument("--format", choices=("json", "text", "csv"), default=None,
                        help="output format (default: config output.format or text)")
    common.add_argument("--seed", type=int, default=None, help="random seed for Monte-Carlo commands")
    common.add_argument("--store", metavar="PATH", default=None,
                        help=f"registry store file (default: ${STORE_ENV} or ./qkdsecval-registry.json)")

    p = argparse.ArgumentParser(prog="qkdsecval", description=__doc__.splitlines()[0],
                                parents=[common])
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = p.add_subparsers(dest="cmd", required=True)

    sub.add_parser("keyrate", parents=[common], help="asymptotic key rate from a config")
    sub.add_parser("finite-key", parents=[common], help="finite-key secret length with term breakdown")

    t = sub.add_parser("tha", parents=[common], help="Trojan-horse loss budget and required power")
    t.add_argument("--chain", help="chain JSON path or built-in name (alice_scw, bob_scw)")
    t.add_argument("--reflector", help="id of the reflecting component")
    t.add_argument("--mu-out", type=float, help="target mean photon number returned to Eve")
    t.add_argument("--rep-rate-hz", type=float, default=None)
    t.add_argument("--wavelength-m", type=float, default=None)

    a = sub.add_parser("attack", parents=[common], help="evaluate an attack")
    a.add_argument("which", choices=("usd", "splitting", "blinding", "faked-state", "ref-scan"))
    a.add_argument("--m", type=float, default=None, help="modulation index (usd)")
    a.add_argument("--workers", type=int, default=1, help="threads for Monte-Carlo chunks")

    r = sub.add_parser("registry", parents=[common], help="vulnerability registry")
    rsub = r.add_subparsers(dest="action", required=True)
    s = rsub.add_parser("seed", parents=[common], help="load the ten-issue SCW evaluation table")
    s.add_argument("--overwrite", action="store_true")
    st = rsub.add_parser("set", parents=[common], help="append a hardness assessment")
    st.add_argument("id")
    st.add_argument("level", choices=[h.name for h in Hardness])
    st.add_argument("--note", default="")
    st.add_argument("--timestamp", default=None, help="ISO 8601; defaults to now (UTC)")
    st.add_argument("--component", default=None)
    rp = rsub.add_parser("report", parents=[common], help="render the registry")
    rp.add_argument("--layer", choices=[layer.name for layer in Layer])
    rp.add_argument("--hardness", choices=[h.name for h in Hardness])
    rp.add_argument("--risk", choices=[r.value for r in Risk])
    return p


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        cfg = RunConfig.load(args.config)
        args.format = args.format or cfg.output.get("format", "text")
        if args.cmd == "registry":
            text = cmd_registry(args)
        elif args.cmd == "attack":
            doc, table = cmd_attack(cfg, args)
            text = render(doc, args.format, "attack", table)
        else:
            handler, schema = {"keyrate": (cmd_keyrate, "keyrate"),
                               "finite-key": (cmd_finite_key, "finite_key"),
                               "tha": (cmd_tha, "tha")}[args.cmd]
            text = render(handler(cfg, args), args.format, schema)
    except (DomainError, RegistryError, UnknownComponentError, KeyError, ValueError) as exc:
        msg = exc.args[0] if isinstance(exc, KeyError) and exc.args else exc
        print(f"qkdsecval: error: {msg}", file=sys.stderr)
        return 2
    except OSError as exc:
        print(f"qkdsecval: I/O error: {exc}", file=sys.stderr)
        return 1
    sys.stdout.write(text)
    return 0


if __name__ == "__main__":
    sys.exit(main())
