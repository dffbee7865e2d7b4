"""Pipeline driver: gen -> features -> train -> embed -> match -> eval."""

from __future__ import annotations

import argparse
import datetime as _dt
import json
import logging
import shutil
import sys
import tempfile
import warnings
from pathlib import Path

import numpy as np

from . import __version__
from . import io as gio
from .autoencoder import Autoencoder, TrainConfig, train
from .correspond import (Split, chance_hit_rate, compose_truth, ground_truth_accuracy, match_population,
                         random_match_accuracy, roi_hit_rate, uniqueness_rate)
from .features import FeatureDataset, encode_population
from .graph import make_graph
from .kan import SplineGrid
from .metrics import connectivity_from_embeddings, nonzero_mse, recon_report, roi_embeddings
from .seeding import derive_rng
from .synth import PopulationSpec, generate_population

log = logging.getLogger("gyralkan")

DEFAULT_MODEL = {"d_theta": 128, "latent": 128,
                 "grid": {"g_min": -1.0, "g_max": 1.0, "intervals": 5, "order": 3}}


def default_train_config() -> dict:
    return {"train": TrainConfig().to_dict(), "model": json.loads(json.dumps(DEFAULT_MODEL)), "val_frac": 0.0}


class _Stage:
    """Collects outputs in a scratch directory and moves them into place on success."""

    def __init__(self, out):
        self.out = Path(out)

    def __enter__(self):
        self.out.parent.mkdir(parents=True, exist_ok=True)
        self.dir = Path(tempfile.mkdtemp(prefix=f".{self.out.name}.", dir=self.out.parent))
        return self.dir

    def __exit__(self, exc_type, exc, tb):
        if exc_type is None:
            self.out.mkdir(parents=True, exist_ok=True)
            for src in sorted(self.dir.rglob("*")):
                if src.is_file():
                    dst = self.out / src.relative_to(self.dir)
                    dst.parent.mkdir(parents=True, exist_ok=True)
                    src.replace(dst)
        shutil.rmtree(self.dir, ignore_errors=True)
        return False


def _now() -> str:
    return _dt.datetime.now(_dt.timezone.utc).isoformat(timespec="seconds")


def _manifest(stage: Path, args, config, inputs, seed, started):
    hashes = {}
    for p in inputs:
        p = Path(p)
        files = sorted(f for f in p.rglob("*") if f.is_file() and f.name != "manifest.json") if p.is_dir() else [p]
        for f in files:
            hashes[str(f)] = gio.file_sha256(f)
    gio.write_json(stage / "manifest.json", {
        "command": args.command, "argv": sys.argv[1:] if args.argv is None else args.argv,
        "config": config, "inputs": hashes, "seed": seed, "tool_version": __version__,
        "started": started, "finished": _now()})


def _pseudo_graphs(subject_ids, node_ids, rois, hemis, n_rois):
    """Edge-free graphs carrying only labels, enough for ROI hit-rate bookkeeping."""
    graphs = {}
    sid = np.asarray(subject_ids)
    for s in dict.fromkeys(subject_ids):
        idx = np.flatnonzero(sid == s)
        order = idx[np.argsort(np.asarray(node_ids)[idx])]
        graphs[s] = make_graph(len(order), [], [rois[i] for i in order], n_rois, s,
                               [hemis[i] for i in order])
    return graphs


def _run_matching(delta, subject_ids, node_ids, rois, hemis, n_rois, anchor, threshold, epsilon, truth=None):
    subject_ids = list(subject_ids)
    if anchor is None:
        anchor = sorted(set(subject_ids))[0]
    sid = np.asarray(subject_ids)
    if anchor not in set(subject_ids):
        raise ValueError(f"anchor subject {anchor!r} not found")
    ia = np.flatnonzero(sid == anchor)
    targets, tids = {}, {}
    for s in sorted(set(subject_ids) - {anchor}):
        it = np.flatnonzero(sid == s)
        targets[s] = delta[it]
        tids[s] = np.asarray(node_ids)[it]
    if not targets:
        targets[anchor], tids[anchor] = delta[ia], np.asarray(node_ids)[ia]
    corr = match_population(delta[ia], targets, threshold, epsilon, anchor, np.asarray(node_ids)[ia], tids)
    graphs = _pseudo_graphs(subject_ids, node_ids, rois, hemis, n_rois)
    summary = {
        "anchor_subject": anchor, "threshold": threshold, "epsilon": epsilon,
        "n_anchor_nodes": int(len(ia)), "n_target_subjects": len(targets), "n_matches": len(corr.matches),
        "roi_hit_rate": {sp.value: _num(roi_hit_rate(corr, graphs, sp)) for sp in Split},
        "chance_hit_rate": _num(chance_hit_rate(corr, graphs)),
        "uniqueness_rate": _num(uniqueness_rate(corr)),
    }
    if truth is not None:
        t = compose_truth(truth, anchor)
        sizes = {s: graphs[s].n for s in targets}
        summary["ground_truth_accuracy"] = _num(ground_truth_accuracy(corr, t))
        summary["random_match_accuracy"] = _num(random_match_accuracy(corr, t, sizes))
    return corr, summary


def _num(x):
    x = float(x)
    return None if not np.isfinite(x) else x


def cmd_gen(args):
    started = _now()
    spec_doc = gio.read_json(args.spec) if args.spec else {}
    if args.seed is not None:
        spec_doc["seed"] = args.seed
    spec = PopulationSpec(**spec_doc)
    template, subjects, truth = generate_population(spec)
    with _Stage(args.out) as st:
        gio.save_graph(template, st / "template.json")
        for g in subjects:
            gio.save_graph(g, st / "graphs" / f"{g.subject_id}.json")
        gio.save_ground_truth(truth, st / "ground_truth.json")
        _manifest(st, args, spec.to_dict(), [args.spec] if args.spec else [], spec.seed, started)


def cmd_features(args):
    started = _now()
    graphs = gio.load_graph_dir(args.graphs)
    ds = encode_population(graphs, args.hops)
    with _Stage(args.out) as st:
        gio.save_features(ds, st / "features.json")
        _manifest(st, args, {"hops": args.hops}, [args.graphs], None, started)


def _load_train_config(path, seed):
    doc = default_train_config()
    if path:
        user = gio.read_json(path)
        if "train" in user or "model" in user:
            doc["train"].update(user.get("train", {}))
            doc["model"].update(user.get("model", {}))
            doc["val_frac"] = user.get("val_frac", doc["val_frac"])
        else:
            doc["train"].update(user)
    if seed is not None:
        doc["train"]["seed"] = seed
    return doc


def _split_subjects(ds: FeatureDataset, frac: float, seed: int):
    subs = ds.subjects
    n_val = int(round(frac * len(subs)))
    if n_val <= 0 or n_val >= len(subs):
        return ds, None
    perm = derive_rng(seed, "val_split").permutation(len(subs))
    val = sorted(subs[i] for i in perm[:n_val])
    return ds.subset(sorted(set(subs) - set(val))), ds.subset(val)


def cmd_train(args):
    if args.write_template:
        gio.write_json(args.write_template, default_train_config())
        return
    if not (args.features and args.out):
        raise ValueError("train needs --features and --out (or --write-template)")
    started = _now()
    doc = _load_train_config(args.config, args.seed)
    cfg = TrainConfig(**doc["train"])
    if args.epochs is not None:
        cfg.max_epochs = args.epochs
        doc["train"]["max_epochs"] = args.epochs
    ds = gio.load_features(args.features)
    model = doc["model"]
    ae = Autoencoder.init(ds.n_rois, ds.l, model["d_theta"], model["latent"], SplineGrid(**model["grid"]), cfg.seed)
    tr, val = _split_subjects(ds, float(doc.get("val_frac", 0.0)), cfg.seed)
    ae, history = train(ae, tr, cfg, val)
    with _Stage(args.out) as st:
        gio.save_checkpoint(ae, st / "checkpoint.json", cfg, history)
        gio.write_json(st / "history.json", history)
        _manifest(st, args, doc, [args.features] + ([args.config] if args.config else []), cfg.seed, started)


def cmd_embed(args):
    started = _now()
    ae, cfg, _ = gio.load_checkpoint(args.ckpt)
    ds = gio.load_features(args.features)
    delta = np.zeros((len(ds), ae.latent))
    theta = np.zeros((len(ds), ae.l + 1, ae.d_theta))
    for s in range(0, len(ds), 1024):
        delta[s:s + 1024], theta[s:s + 1024] = ae.encode_batch(ds.data[s:s + 1024])
    with _Stage(args.out) as st:
        gio.save_embeddings(st / "embeddings.json", ds.subject_ids, ds.node_ids, delta,
                            theta if args.with_theta else None, ds.rois, ds.hemispheres)
        _manifest(st, args, {"with_theta": args.with_theta}, [args.ckpt, args.features],
                  cfg.seed if cfg else None, started)


def cmd_match(args):
    started = _now()
    emb = gio.load_embeddings(args.emb)
    if "rois" not in emb:
        raise gio.FormatError("embedding store lacks ROI labels; regenerate with `embed`")
    n_rois = max(emb["rois"]) + 1 if args.n_rois is None else args.n_rois
    truth = gio.load_ground_truth(args.truth) if args.truth else None
    corr, summary = _run_matching(emb["delta"], emb["subject_ids"], emb["node_ids"], emb["rois"],
                                  emb["hemispheres"], n_rois, args.anchor, args.threshold, args.epsilon, truth)
    with _Stage(args.out) as st:
        gio.atomic_write_text(st / "matches.csv", gio.matches_csv(corr))
        gio.write_json(st / "summary.json", summary)
        _manifest(st, args, {"anchor": args.anchor, "threshold": args.threshold, "epsilon": args.epsilon},
                  [args.emb] + ([args.truth] if args.truth else []), None, started)


def cmd_eval(args):
    started = _now()
    ae, cfg, history = gio.load_checkpoint(args.ckpt)
    ds = gio.load_features(args.features)
    lam = cfg.lam if cfg else 2.0
    delta = ae.embed(ds)
    _, chi_hat = ae.decode_batch(delta)
    rep = recon_report(ds.data, chi_hat)
    truth = gio.load_ground_truth(args.truth) if args.truth else None
    corr, match_summary = _run_matching(delta, ds.subject_ids, ds.node_ids, ds.rois.tolist(), ds.hemispheres,
                                        ds.n_rois, args.anchor, args.threshold, args.epsilon, truth)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", RuntimeWarning)
        conn = connectivity_from_embeddings(roi_embeddings(ae), args.top_k)
    report = {
        "reconstruction": {**rep.to_dict(), "nonzero_mse": nonzero_mse(ds.data, chi_hat), "lambda": lam},
        "correspondence": match_summary,
        "roi_connectivity": [{"roi_a": a, "roi_b": b, "pcc": p} for a, b, p in conn.pairs],
        "final_train_loss": history[-1]["train_loss"] if history else None,
    }
    with _Stage(args.out) as st:
        gio.write_json(st / "report.json", report)
        lines = ["subject_id,node_id,mse,pcc,ssim"]
        for i in range(len(ds)):
            lines.append(f"{ds.subject_ids[i]},{int(ds.node_ids[i])},{rep.per_sample['mse'][i]!r},"
                         f"{rep.per_sample['pcc'][i]!r},{rep.per_sample['ssim'][i]!r}")
        gio.atomic_write_text(st / "recon_per_sample.csv", "\n".join(lines) + "\n")
        _manifest(st, args, {"anchor": args.anchor, "threshold": args.threshold, "epsilon": args.epsilon,
                             "top_k": args.top_k}, [args.ckpt, args.features] + ([args.truth] if args.truth else []),
                  cfg.seed if cfg else None, started)


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="gyralkan", description=__doc__)
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("gen", help="generate a synthetic population with ground truth")
    s.add_argument("--spec", help="PopulationSpec JSON (defaults used when omitted)")
    s.add_argument("--seed", type=int)
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_gen)

    s = sub.add_parser("features", help="encode multi-hop features for every node")
    s.add_argument("--graphs", required=True)
    s.add_argument("--hops", type=int, default=1)
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_features)

    s = sub.add_parser("train", help="train the KAN autoencoder")
    s.add_argument("--features")
    s.add_argument("--config")
    s.add_argument("--seed", type=int)
    s.add_argument("--epochs", type=int, help="override max_epochs")
    s.add_argument("--out")
    s.add_argument("--write-template", metavar="PATH", help="write the default train.json and exit")
    s.set_defaults(func=cmd_train)

    s = sub.add_parser("embed", help="compute latent embeddings")
    s.add_argument("--ckpt", required=True)
    s.add_argument("--features", required=True)
    s.add_argument("--with-theta", action="store_true", help="also store per-hop ROI embeddings")
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_embed)

    s = sub.add_parser("match", help="match an anchor subject against all others")
    s.add_argument("--anchor")
    s.add_argument("--emb", required=True)
    s.add_argument("--threshold", type=float, default=0.9)
    s.add_argument("--epsilon", type=float, default=0.02)
    s.add_argument("--truth")
    s.add_argument("--n-rois", type=int)
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_match)

    s = sub.add_parser("eval", help="reconstruction, correspondence and ROI connectivity report")
    s.add_argument("--ckpt", required=True)
    s.add_argument("--features", required=True)
    s.add_argument("--truth")
    s.add_argument("--anchor")
    s.add_argument("--threshold", type=float, default=0.9)
    s.add_argument("--epsilon", type=float, default=0.02)
    s.add_argument("--top-k", type=int, default=5)
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_eval)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    args.argv = list(argv) if argv is not None else None
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        args.func(args)
    except Exception as exc:  # reported as machine-readable JSON
        log.debug("failure", exc_info=True)
        sys.stderr.write(json.dumps({"error": type(exc).__name__, "message": str(exc),
                                     "command": args.command}) + "\n")
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
