"""``addressless`` command line.

Exit codes: 0 success, 1 one-shot ``verify`` returned false, 2 usage or
configuration error.
"""

import argparse
import json
import logging
import os
import sys
import threading
import time
from pathlib import Path

import numpy as np

from . import analysis
from .addrcodec import (
    CipherKey,
    CodecError,
    RoutingPrefix,
    SaltParams,
    generate_address,
    generate_suffixes,
    get_cipher,
    hash_source,
    to_address,
    verify_address,
)
from .config import ConfigError, load_config, p_bound, salt_params_to_dict, write_key_file
from .entrance import Entrance, EntranceConfig, EntranceServer, LbStrategy
from .gateway import Gateway, GatewayConfig, GatewayServer
from .simnet import Scenario, ScenarioError, run_scenario

log = logging.getLogger("addressless")

EXIT_OK, EXIT_FALSE, EXIT_USAGE = 0, 1, 2


class UsageError(Exception):
    pass


def now_ms():
    return time.time_ns() // 1_000_000


def _prefix(cfg, text):
    if text is None:
        return cfg.prefixes[0]
    p = RoutingPrefix.parse(text)
    if p not in cfg.prefixes:
        raise UsageError(f"{p} is not among the configured prefixes")
    return p


# -- subcommands -------------------------------------------------------------


def cmd_keygen(args):
    key = CipherKey.generate(args.cipher)
    try:
        write_key_file(args.out, key)
    except FileExistsError:
        raise UsageError(f"{args.out} exists; refusing to overwrite a key") from None
    print(f"wrote {args.cipher} key to {args.out}")
    if args.config:
        t0 = args.t0_ms if args.t0_ms is not None else now_ms()
        salt = SaltParams.symmetric(t0, args.step_x_ms, args.threshold_ms)
        cfg = {
            "cipher": args.cipher,
            "key_file": os.path.relpath(args.out, Path(args.config).parent),
            "salt": salt_params_to_dict(salt),
            "prefixes": args.prefix or ["2001:db8::/64"],
            "ports": {"entrance": 8080, "service": 80},
            "lb_strategy": "static" if len(args.prefix or [1]) == 1 else "round-robin",
            "cache_mode": "off",
            "idle_timeout": 300_000,
            "insecure": args.cipher == "toy16",
        }
        Path(args.config).write_text(json.dumps(cfg, indent=2) + "\n")
        print(f"wrote config to {args.config} (t0_ms={t0})")
    return EXIT_OK


def cmd_genaddr(args):
    cfg = load_config(args.config, insecure=args.insecure)
    prefix = _prefix(cfg, args.prefix)
    t = args.now_ms if args.now_ms is not None else now_ms()
    print(generate_address(args.src, prefix, cfg.key, cfg.salt, t))
    return EXIT_OK


def cmd_verify(args):
    cfg = load_config(args.config, insecure=args.insecure)
    t = args.now_ms if args.now_ms is not None else now_ms()
    dst = to_address(args.dst)
    prefix = next((p for p in cfg.prefixes if p.contains(dst)), None)
    ok = prefix is not None and verify_address(args.src, dst, prefix, cfg.key, cfg.salt, t)
    print("true" if ok else "false")
    return EXIT_OK if ok else EXIT_FALSE


def _load_tokens(path):
    if path is None:
        return ()
    return tuple(line.strip() for line in Path(path).read_text().splitlines() if line.strip())


def cmd_entrance_serve(args):
    cfg = load_config(args.config, insecure=args.insecure)
    tokens = _load_tokens(args.tokens_file)
    ecfg = EntranceConfig(
        cfg.key, cfg.salt, LbStrategy(cfg.lb_strategy, cfg.prefixes),
        service_port=cfg.ports["service"], listen_host=args.host,
        listen_port=args.port or cfg.ports["entrance"],
        auth_mode="token-list" if tokens else "off", tokens=tokens,
    )
    server = EntranceServer(Entrance(ecfg))
    log.info("entrance listening on [%s]:%d", *server.server_address[:2])
    _serve(server)
    return EXIT_OK


def cmd_gateway_serve(args):
    cfg = load_config(args.config, insecure=args.insecure)
    prefix = _prefix(cfg, args.prefix)
    gw = Gateway(GatewayConfig(prefix, cfg.key, cfg.salt, cfg.cache, cfg.idle_timeout))
    server = GatewayServer(gw, host=args.host, port=args.port or cfg.ports["service"])
    stop = threading.Event()

    def sweep():
        while not stop.wait(1.0):
            gw.expire(now_ms())

    threading.Thread(target=sweep, daemon=True).start()
    log.info("gateway for %s listening on [%s]:%d", prefix, *server.server_address[:2])
    try:
        _serve(server)
    finally:
        stop.set()
    return EXIT_OK


def _serve(server):
    try:
        server.serve_forever()
    except KeyboardInterrupt:
        pass
    finally:
        server.server_close()


def cmd_sim_run(args):
    try:
        raw = json.loads(Path(args.scenario).read_text())
    except OSError as e:
        raise UsageError(f"{args.scenario}: {e.strerror}") from None
    except json.JSONDecodeError as e:
        raise UsageError(f"{args.scenario}: invalid JSON: {e}") from None
    if args.seed is not None:
        raw["seed"] = args.seed
    scenario = Scenario.from_dict(raw)
    metrics = run_scenario(scenario)
    out = {"scenario": scenario.to_dict(), "metrics": metrics.to_dict()}
    text = json.dumps(out, indent=2, sort_keys=True)
    if args.out:
        Path(args.out).write_text(text + "\n")
    else:
        print(text)
    return EXIT_OK


def _samples(args):
    if args.input:
        return analysis.read_suffix_file(args.input)
    if not args.config:
        raise UsageError("give --input FILE or --config with --src")
    cfg = load_config(args.config, insecure=args.insecure)
    sources = args.src or ["2001:db8::1"]
    start = args.start_ms if args.start_ms is not None else cfg.salt.t0 + 3_600_000
    per = -(-args.count // len(sources))
    hashes = np.repeat(np.array([hash_source(s) for s in sources], dtype=np.uint64), per)[: args.count]
    times = start + np.tile(np.arange(per, dtype=np.int64) * cfg.salt.step_x, len(sources))[: args.count]
    salts = ((times - cfg.salt.t0) // cfg.salt.step_x).astype(np.uint64)
    return generate_suffixes(hashes, salts, cfg.key)


def _bits_and_p(args):
    if args.config:
        cfg = load_config(args.config, insecure=args.insecure)
        return get_cipher(cfg.cipher).block_bits, p_bound(cfg.salt)
    if args.bits is None or args.p is None:
        raise UsageError("give --bits and --p, or --config")
    return args.bits, args.p


def cmd_analyze(args):
    what = args.what
    if what in ("scantime", "margin"):
        n, p = _bits_and_p(args)
        report = analysis.scan_time_report(n, p) if what == "scantime" else analysis.margin_report(n, p)
        text = analysis.dumps(report)
    else:
        samples = _samples(args)
        if what == "entropy":
            text = analysis.dumps(analysis.entropy_report(samples))
        elif what == "scatter":
            text = analysis.scatter_csv(samples, tag="collected" if args.input else "generated").rstrip("\n")
        else:
            text = analysis.dumps(analysis.uniformity_report(samples, args.alpha))
    if args.out:
        Path(args.out).write_text(text + "\n")
    else:
        print(text)
    return EXIT_OK


# -- parser ------------------------------------------------------------------


def build_parser():
    ap = argparse.ArgumentParser(prog="addressless", description=__doc__.splitlines()[0])
    ap.add_argument("-v", "--verbose", action="count", default=0)
    ap.add_argument("--insecure", action="store_true", help="accept configs below the scan margin (and toy16)")
    sub = ap.add_subparsers(dest="cmd", required=True)

    p = sub.add_parser("keygen", help="write a random key file (mode 0600)")
    p.add_argument("--cipher", default="reference-des", choices=["reference-des", "toy16"])
    p.add_argument("--out", required=True)
    p.add_argument("--config", help="also write a starter config with a fixed t0")
    p.add_argument("--prefix", action="append")
    p.add_argument("--t0-ms", type=int)
    p.add_argument("--step-x-ms", type=int, default=1)
    p.add_argument("--threshold-ms", type=int, default=10_000)
    p.set_defaults(func=cmd_keygen)

    p = sub.add_parser("genaddr", help="generate the destination address for a source")
    p.add_argument("--config", required=True)
    p.add_argument("--src", required=True)
    p.add_argument("--prefix")
    p.add_argument("--now-ms", type=int)
    p.set_defaults(func=cmd_genaddr)

    p = sub.add_parser("verify", help="check a (source, destination) pair; exit 1 if false")
    p.add_argument("--config", required=True)
    p.add_argument("--src", required=True)
    p.add_argument("--dst", required=True)
    p.add_argument("--now-ms", type=int)
    p.set_defaults(func=cmd_verify)

    for name, func, helptext in (
        ("entrance", cmd_entrance_serve, "redirecting entrance"),
        ("gateway", cmd_gateway_serve, "verifying demo service"),
    ):
        p = sub.add_parser(name, help=helptext)
        s = p.add_subparsers(dest="action", required=True)
        q = s.add_parser("serve")
        q.add_argument("--config", required=True)
        q.add_argument("--host", default="::")
        q.add_argument("--port", type=int)
        if name == "entrance":
            q.add_argument("--tokens-file", help="one bearer token per line; enables token auth")
        else:
            q.add_argument("--prefix")
        q.set_defaults(func=func)

    p = sub.add_parser("sim", help="run a simulation scenario")
    s = p.add_subparsers(dest="action", required=True)
    q = s.add_parser("run")
    q.add_argument("--scenario", required=True)
    q.add_argument("--seed", type=int)
    q.add_argument("--out")
    q.set_defaults(func=cmd_sim_run)

    p = sub.add_parser("analyze", help="suffix statistics and scan calculators")
    p.add_argument("what", choices=["entropy", "scatter", "scantime", "margin", "uniformity"])
    p.add_argument("--input", help="suffix list, one 16-hex-digit suffix per line")
    p.add_argument("--config")
    p.add_argument("--src", action="append")
    p.add_argument("--count", type=int, default=100_000)
    p.add_argument("--start-ms", type=int)
    p.add_argument("--bits", type=int)
    p.add_argument("--p", type=int)
    p.add_argument("--alpha", type=float, default=0.001)
    p.add_argument("--out")
    p.set_defaults(func=cmd_analyze)
    return ap


def main(argv=None):
    args = build_parser().parse_args(argv)
    logging.basicConfig(
        level=logging.DEBUG if args.verbose else logging.INFO,
        format="%(asctime)s %(name)s %(levelname)s %(message)s",
    )
    try:
        return args.func(args)
    except ConfigError as e:
        for err in e.errors:
            print(f"config error: {err}", file=sys.stderr)
        return EXIT_USAGE
    except ScenarioError as e:
        for err in e.errors:
            print(f"scenario error: {err}", file=sys.stderr)
        return EXIT_USAGE
    except (UsageError, CodecError, analysis.AnalysisError, ValueError) as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
