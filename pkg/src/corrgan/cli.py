"""Batch command-line front end.

Subcommands cover the whole pipeline: synthesize a ground-truth dataset,
pretrain the autoencoder, run full adversarial training with periodic
checkpoints and metrics, generate conditional samples, inpaint image
halves, and evaluate an existing sample dump against a training set.
Every run is driven by a JSON config file plus overriding flags and writes
its fully-resolved config next to its outputs.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import os
import sys
from pathlib import Path

import numpy as np

from . import dataio, gan, metrics
from .corrnn import encode, hidden_correlation, init_corrnn, pretrain
from .dataio import DataError, SynthSpec
from .gan import TrainCfg
from .nn import DivergenceError, make_rng

MODES = ("synthdata", "pretrain", "train", "generate", "inpaint", "eval")


class ConfigError(ValueError):
    """Bad run configuration (unknown key, conflict, missing requirement)."""


@dataclasses.dataclass
class RunConfig:
    mode: str
    out_dir: Path
    train: TrainCfg
    synth: SynthSpec | None = None
    profiles: Path | None = None
    mnist_images: Path | None = None
    mnist_labels: Path | None = None
    alpha: float = 0.5
    interval: int = 100
    # mode-specific extras
    checkpoint: Path | None = None
    condition: str | None = None
    count: int = 10
    threshold: float = 0.5
    overwrite_condition: bool = False
    dump: Path | None = None

    def dataset_sources(self) -> list[str]:
        sources = []
        if self.profiles is not None:
            sources.append("profiles")
        if self.mnist_images is not None or self.mnist_labels is not None:
            sources.append("mnist")
        if self.synth is not None:
            sources.append("synth")
        return sources

    def to_dict(self) -> dict:
        out = {
            "mode": self.mode,
            "out_dir": str(self.out_dir),
            "alpha": self.alpha,
            "interval": self.interval,
            "train": self.train.to_dict(),
        }
        if self.synth is not None:
            out["synth"] = dataclasses.asdict(self.synth)
        for key in ("profiles", "mnist_images", "mnist_labels", "checkpoint", "dump"):
            value = getattr(self, key)
            if value is not None:
                out[key] = str(value)
        if self.mode == "generate":
            out.update(
                condition=self.condition,
                count=self.count,
                threshold=self.threshold,
                overwrite_condition=self.overwrite_condition,
            )
        if self.mode == "inpaint":
            out["count"] = self.count
        return out


_TRAIN_KEYS = {f.name for f in dataclasses.fields(TrainCfg)}
_SYNTH_KEYS = {f.name for f in dataclasses.fields(SynthSpec)}
_TOP_KEYS = {
    "mode",
    "out_dir",
    "seed",
    "alpha",
    "interval",
    "train",
    "synth",
    "profiles",
    "mnist_images",
    "mnist_labels",
}


def _check_keys(section: dict, allowed: set, where: str) -> None:
    for key in section:
        if key not in allowed:
            raise ConfigError(f"unknown config key {key!r} in {where}")


def parse_config(path, overrides: dict) -> RunConfig:
    """Merge config-file values with flag overrides (flags win).

    The seed resolves as flag > CORRGAN_SEED env var > file > default.
    Unknown keys anywhere in the file are rejected.
    """
    raw = {}
    if path is not None:
        try:
            raw = json.loads(Path(path).read_text(encoding="utf-8"))
        except json.JSONDecodeError as exc:
            raise ConfigError(f"malformed config {path}: {exc}") from exc
        if not isinstance(raw, dict):
            raise ConfigError(f"config {path} must be a JSON object")
    _check_keys(raw, _TOP_KEYS, "config")
    train_raw = dict(raw.get("train", {}))
    _check_keys(train_raw, _TRAIN_KEYS, "train")
    synth_raw = raw.get("synth")
    if synth_raw is not None:
        synth_raw = dict(synth_raw)
        _check_keys(synth_raw, _SYNTH_KEYS, "synth")

    mode = overrides.get("mode") or raw.get("mode")
    if mode not in MODES:
        raise ConfigError(f"mode must be one of {MODES}, got {mode!r}")

    # seed precedence: flag > env > file > TrainCfg default
    seed = overrides.get("seed")
    if seed is None and os.environ.get("CORRGAN_SEED"):
        try:
            seed = int(os.environ["CORRGAN_SEED"])
        except ValueError as exc:
            raise ConfigError(
                f"CORRGAN_SEED must be an integer, got {os.environ['CORRGAN_SEED']!r}"
            ) from exc
    if seed is None:
        seed = raw.get("seed", train_raw.get("seed"))
    if seed is not None:
        train_raw["seed"] = int(seed)

    for key in _TRAIN_KEYS:
        if overrides.get(key) is not None and key != "seed":
            train_raw[key] = overrides[key]
    train_raw.setdefault("latent_dim", 16)
    try:
        train_cfg = TrainCfg(**train_raw)
        train_cfg.validate()
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"bad train config: {exc}") from exc

    synth = None
    if synth_raw is not None:
        try:
            synth = SynthSpec(**synth_raw)
            synth.validate()
        except (TypeError, DataError) as exc:
            raise ConfigError(f"bad synth config: {exc}") from exc

    out_dir = overrides.get("out_dir") or raw.get("out_dir")
    if out_dir is None:
        raise ConfigError("out_dir is required (config key or --out-dir)")

    def pick(key, default=None):
        if overrides.get(key) is not None:
            return overrides[key]
        return raw.get(key, default)

    cfg = RunConfig(
        mode=mode,
        out_dir=Path(out_dir),
        train=train_cfg,
        synth=synth,
        profiles=_opt_path(pick("profiles")),
        mnist_images=_opt_path(pick("mnist_images")),
        mnist_labels=_opt_path(pick("mnist_labels")),
        alpha=float(pick("alpha", 0.5)),
        interval=int(pick("interval", 100)),
        checkpoint=_opt_path(overrides.get("checkpoint")),
        condition=overrides.get("condition"),
        count=int(overrides["count"]) if overrides.get("count") is not None else 10,
        threshold=float(overrides["threshold"]) if overrides.get("threshold") is not None else 0.5,
        overwrite_condition=bool(overrides.get("overwrite_condition")),
        dump=_opt_path(overrides.get("dump")),
    )
    cfg.train.eval_interval = cfg.interval
    cfg.train.eval_alpha = cfg.alpha
    _validate_mode_requirements(cfg)
    return cfg


def _opt_path(value) -> Path | None:
    return None if value is None else Path(value)


def _validate_mode_requirements(cfg: RunConfig) -> None:
    sources = cfg.dataset_sources()
    if (cfg.mnist_images is None) != (cfg.mnist_labels is None):
        raise ConfigError("mnist_images and mnist_labels must be given together")
    if cfg.mode in ("pretrain", "train"):
        if len(sources) != 1:
            raise ConfigError(
                "exactly one dataset source (profiles | mnist | synth) is "
                f"required, got {sources or 'none'}"
            )
    if cfg.mode == "synthdata" and cfg.synth is None:
        raise ConfigError("synthdata needs a synth section in the config")
    if cfg.mode in ("generate", "inpaint") and cfg.checkpoint is None:
        raise ConfigError(f"{cfg.mode} needs --checkpoint")
    if cfg.mode == "inpaint" and cfg.mnist_images is None:
        raise ConfigError("inpaint needs mnist_images/mnist_labels")
    if cfg.mode == "eval":
        if cfg.dump is None:
            raise ConfigError("eval needs --dump")
        if len(sources) != 1:
            raise ConfigError("eval needs exactly one training dataset source")
    for name in ("profiles", "mnist_images", "mnist_labels", "checkpoint", "dump"):
        path = getattr(cfg, name)
        if path is not None and not Path(path).exists():
            raise ConfigError(f"{name} path does not exist: {path}")


def _echo_config(cfg: RunConfig) -> None:
    cfg.out_dir.mkdir(parents=True, exist_ok=True)
    (cfg.out_dir / "resolved_config.json").write_text(
        json.dumps(cfg.to_dict(), indent=2, sort_keys=True) + "\n", encoding="utf-8"
    )


def _load_dataset(cfg: RunConfig):
    """(EncodedDataset, meta) for the configured source.

    Image datasets are binarized and split into (top, bottom) halves so the
    same record pipeline covers both kinds; meta records how to interpret
    the record and, for profiles/synth, the token dictionaries.
    """
    if cfg.profiles is not None:
        records = dataio.load_profiles(cfg.profiles)
        cleaned, drops = dataio.preprocess_profiles(records)
        if not cleaned:
            raise DataError(f"no usable profiles in {cfg.profiles} (drops: {drops})")
        skills, professions = dataio.build_dictionaries(cleaned)
        dataset = dataio.vectorize_profiles(cleaned, skills, professions)
        meta = {
            "kind": "profiles",
            "skills": skills.tokens,
            "professions": professions.tokens,
            "drops": drops,
        }
        return dataset, meta
    if cfg.mnist_images is not None:
        images, labels = dataio.load_mnist(cfg.mnist_images, cfg.mnist_labels)
        binary = dataio.binarize_images(images)
        top, bottom = dataio.split_image_halves(binary)
        dataset = dataio.EncodedDataset(
            X=top,
            Y=bottom,
            skills=dataio.TokenDictionary([]),
            professions=dataio.TokenDictionary([]),
        )
        return dataset, {"kind": "mnist", "image_hw": [28, 28], "labels": labels}
    dataset, pools = dataio.synth_correlated_dataset(cfg.synth)
    meta = {
        "kind": "synth",
        "skills": dataset.skills.tokens,
        "professions": dataset.professions.tokens,
        "pools": [p.tolist() for p in pools],
    }
    return dataset, meta


def _checkpoint_meta(meta: dict) -> dict:
    return {k: v for k, v in meta.items() if k not in ("labels", "drops")}


def _save_bundle(path, result_or_parts, cfg: RunConfig, meta: dict, epoch: int):
    G, D, corrnn = result_or_parts
    dataio.save_checkpoint(
        path,
        dataio.CheckpointBundle(
            corrnn=corrnn,
            generator=G,
            discriminator=D,
            cfg=cfg.train.to_dict(),
            epoch=epoch,
            seed=cfg.train.seed,
            meta=_checkpoint_meta(meta),
        ),
    )


def _cmd_synthdata(cfg: RunConfig) -> int:
    dataset, meta = _load_dataset(
        dataclasses.replace(cfg, profiles=None, mnist_images=None, mnist_labels=None)
    )
    records = dataio.dataset_to_profiles(dataset)
    payload = [{"profession": r.profession, "skills": r.skills} for r in records]
    (cfg.out_dir / "dataset.json").write_text(
        json.dumps(payload, indent=1) + "\n", encoding="utf-8"
    )
    pools_by_name = {
        meta["professions"][j]: [meta["skills"][k] for k in pool]
        for j, pool in enumerate(meta["pools"])
    }
    (cfg.out_dir / "pools.json").write_text(
        json.dumps(pools_by_name, indent=1, sort_keys=True) + "\n", encoding="utf-8"
    )
    print(f"wrote {len(records)} samples to {cfg.out_dir / 'dataset.json'}")
    return 0


def _cmd_pretrain(cfg: RunConfig) -> int:
    dataset, meta = _load_dataset(cfg)
    tc = cfg.train
    rng = make_rng(tc.seed)
    model = init_corrnn(dataset.X.shape[1], dataset.Y.shape[1], tc.latent_dim, rng)
    history = pretrain(
        model,
        dataset.X,
        dataset.Y,
        epochs=tc.pretrain_epochs,
        batch_size=tc.batch_size,
        lr=tc.pretrain_lr,
        rng=rng,
        lambda_corr=0.0 if tc.ablation_medgan else tc.lambda_corr,
        cross_reconstruction=not tc.ablation_medgan,
        recon_loss=tc.recon_loss,
        optimizer=tc.optimizer,
    )
    G = gan.init_generator(
        tc.z_dim + (dataset.Y.shape[1] if tc.conditional else 0),
        tc.latent_dim,
        tc.g_hidden,
        rng,
    )
    D = gan.init_discriminator(model.t_dim, tc.d_hidden, rng)
    _save_bundle(cfg.out_dir / "pretrain.cgan", (G, D, model), cfg, meta, epoch=0)
    with open(cfg.out_dir / "pretrain_loss.csv", "w") as fh:
        fh.write("epoch,loss\n")
        for i, loss in enumerate(history, 1):
            fh.write(f"{i},{loss!r}\n")
    Hx = encode(model, dataset.X, np.zeros_like(dataset.Y))
    Hy = encode(model, np.zeros_like(dataset.X), dataset.Y)
    corr = hidden_correlation(Hx, Hy) / model.hidden_dim
    print(
        f"pretrained {tc.pretrain_epochs} epochs; "
        f"loss {history[0]:.4f} -> {history[-1]:.4f}; "
        f"mean hidden correlation {corr:.4f}"
    )
    return 0


def _cmd_train(cfg: RunConfig) -> int:
    dataset, meta = _load_dataset(cfg)

    def save_cb(epoch, G, D, corrnn, reports):
        _save_bundle(
            cfg.out_dir / f"checkpoint_epoch{epoch}.cgan",
            (G, D, corrnn),
            cfg,
            meta,
            epoch,
        )

    result = gan.train_corrgan(cfg.train, dataset, checkpoint_callback=save_cb)
    tokens = (meta.get("skills") or None) if meta["kind"] != "mnist" else None
    image_hw = tuple(meta["image_hw"]) if meta["kind"] == "mnist" else None
    written = metrics.export_report(
        result.reports, cfg.out_dir, tokens=tokens, image_hw=image_hw
    )
    print(f"trained {cfg.train.epochs} epochs; wrote {len(written)} metric files")
    for rep in result.reports:
        print(
            f"  epoch {rep.epoch}: occurrence_mse={rep.occurrence_mse:.3e} "
            f"cooc_err_abs={rep.cooc_err_abs:.5f}"
        )
    return 0


def _resolve_condition(bundle, condition: str) -> np.ndarray:
    professions = bundle.meta.get("professions") or []
    y_dim = bundle.corrnn.t_dim - bundle.corrnn.x_dim
    if condition in professions:
        idx = professions.index(condition)
    else:
        try:
            idx = int(condition)
        except ValueError:
            raise ConfigError(
                f"condition {condition!r} is neither a known profession "
                f"({len(professions)} in checkpoint) nor an index"
            ) from None
        if not 0 <= idx < y_dim:
            raise ConfigError(f"condition index {idx} out of range 0..{y_dim - 1}")
    one_hot = np.zeros(y_dim)
    one_hot[idx] = 1.0
    return one_hot


def _cmd_generate(cfg: RunConfig) -> int:
    bundle = dataio.load_checkpoint(cfg.checkpoint)
    rng = make_rng(cfg.train.seed)
    conditional = bool(bundle.cfg.get("conditional", True))
    condition = None
    if conditional:
        if cfg.condition is None:
            raise ConfigError("this checkpoint is conditional; pass --condition")
        condition = _resolve_condition(bundle, cfg.condition)
    result = gan.conditional_generate(
        bundle.generator,
        bundle.corrnn,
        condition,
        cfg.count,
        rng,
        threshold=cfg.threshold,
        overwrite_condition=cfg.overwrite_condition,
    )
    np.savetxt(cfg.out_dir / "samples_binary.csv", result.binary, fmt="%d", delimiter=",")
    written = [cfg.out_dir / "samples_binary.csv"]
    if bundle.meta.get("kind") == "mnist":
        grid = metrics.image_grid(result.raw, tuple(bundle.meta["image_hw"]))
        metrics.write_pgm(cfg.out_dir / "samples.pgm", grid)
        written.append(cfg.out_dir / "samples.pgm")
    else:
        tokens = bundle.meta.get("skills") or []
        lines = metrics.skill_lines(result.binary[:, : len(tokens)], tokens)
        (cfg.out_dir / "samples.txt").write_text(
            "\n".join(lines) + "\n", encoding="utf-8"
        )
        written.append(cfg.out_dir / "samples.txt")
        for line in lines:
            print(line)
    print(f"wrote {', '.join(str(p) for p in written)}")
    return 0


def _cmd_inpaint(cfg: RunConfig) -> int:
    bundle = dataio.load_checkpoint(cfg.checkpoint)
    images, _ = dataio.load_mnist(cfg.mnist_images, cfg.mnist_labels)
    binary = dataio.binarize_images(images)
    rng = make_rng(cfg.train.seed)
    count = min(cfg.count, binary.shape[0])
    completed = np.zeros((count, binary.shape[1]))
    agreement = np.zeros(count)
    half = binary.shape[1] // 2
    for i in range(count):
        cont, binarized = gan.inpaint_halves(bundle.generator, bundle.corrnn, binary[i], rng)
        completed[i] = cont
        agreement[i] = (binarized[half:] == binary[i, half:]).mean()
    hw = tuple(bundle.meta.get("image_hw", [28, 28]))
    metrics.write_pgm(cfg.out_dir / "inpainted.pgm", metrics.image_grid(completed, hw))
    metrics.write_pgm(
        cfg.out_dir / "originals.pgm", metrics.image_grid(binary[:count], hw)
    )
    with open(cfg.out_dir / "inpaint_agreement.csv", "w") as fh:
        fh.write("image_index,bottom_half_agreement\n")
        for i, a in enumerate(agreement):
            fh.write(f"{i},{a!r}\n")
    print(
        f"inpainted {count} images; mean bottom-half agreement "
        f"{agreement.mean():.3f}"
    )
    return 0


def _cmd_eval(cfg: RunConfig) -> int:
    dataset, meta = _load_dataset(cfg)
    dump = np.loadtxt(cfg.dump, delimiter=",", ndmin=2)
    t_dim = dataset.X.shape[1] + dataset.Y.shape[1]
    if dump.shape[1] != t_dim:
        raise DataError(
            f"dump width {dump.shape[1]} does not match the training set's "
            f"record length {t_dim} ({dataset.X.shape[1]} skills + "
            f"{dataset.Y.shape[1]} professions)"
        )
    gen_x = dump[:, : dataset.X.shape[1]]
    p_train = metrics.occurrence_probabilities(dataset.X)
    p_gen = metrics.occurrence_probabilities(gen_x)
    mse = metrics.occurrence_mse(p_train, p_gen)
    signed, absolute = metrics.cooccurrence_error(
        metrics.cooccurrence_matrix(dataset.X, cfg.alpha),
        metrics.cooccurrence_matrix(gen_x, cfg.alpha),
    )
    report = metrics.EvalReport(
        epoch=0,
        occurrence_mse=mse,
        cooc_err_signed=signed,
        cooc_err_abs=absolute,
        p_train=p_train,
        p_gen=p_gen,
    )
    metrics.export_report([report], cfg.out_dir, tokens=meta.get("skills"))
    print(
        f"occurrence_mse={mse:.6e} cooc_err_signed={signed:+.6f} "
        f"cooc_err_abs={absolute:.6f}"
    )
    return 0


_COMMANDS = {
    "synthdata": _cmd_synthdata,
    "pretrain": _cmd_pretrain,
    "train": _cmd_train,
    "generate": _cmd_generate,
    "inpaint": _cmd_inpaint,
    "eval": _cmd_eval,
}


def dispatch(cfg: RunConfig) -> int:
    _echo_config(cfg)
    return _COMMANDS[cfg.mode](cfg)


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="corrgan",
        description="Correlated discrete data generation: train, sample, evaluate.",
    )
    sub = parser.add_subparsers(dest="mode", required=True, metavar="|".join(MODES))
    for mode in MODES:
        p = sub.add_parser(mode)
        p.add_argument("--config", default=None, help="JSON config file")
        p.add_argument("--out-dir", dest="out_dir", default=None)
        p.add_argument("--seed", type=int, default=None)
        p.add_argument("--profiles", default=None, help="profile JSON path")
        p.add_argument("--mnist-images", dest="mnist_images", default=None)
        p.add_argument("--mnist-labels", dest="mnist_labels", default=None)
        p.add_argument("--alpha", type=float, default=None, help="co-occurrence threshold")
        p.add_argument("--interval", type=int, default=None, help="checkpoint interval")
        # training hyperparameters (override the config file)
        p.add_argument("--epochs", type=int, default=None)
        p.add_argument("--pretrain-epochs", dest="pretrain_epochs", type=int, default=None)
        p.add_argument("--batch-size", dest="batch_size", type=int, default=None)
        p.add_argument("--latent-dim", dest="latent_dim", type=int, default=None)
        p.add_argument("--z-dim", dest="z_dim", type=int, default=None)
        p.add_argument("--d-steps", dest="d_steps", type=int, default=None)
        p.add_argument("--lr", type=float, default=None)
        p.add_argument("--pretrain-lr", dest="pretrain_lr", type=float, default=None)
        p.add_argument("--lambda-corr", dest="lambda_corr", type=float, default=None)
        p.add_argument("--ablation-medgan", dest="ablation_medgan", action="store_const", const=True, default=None)
        if mode in ("generate", "inpaint"):
            p.add_argument("--checkpoint", default=None)
            p.add_argument("-n", "--count", dest="count", type=int, default=None)
        if mode == "generate":
            p.add_argument("--condition", default=None, help="profession token or index")
            p.add_argument("--threshold", type=float, default=None)
            p.add_argument(
                "--overwrite-condition",
                dest="overwrite_condition",
                action="store_const",
                const=True,
                default=None,
            )
        if mode == "eval":
            p.add_argument("--dump", default=None, help="generated binary CSV")
    return parser


def main(argv=None) -> int:
    args = _build_parser().parse_args(argv)
    overrides = {k: v for k, v in vars(args).items() if v is not None and k != "config"}
    try:
        cfg = parse_config(args.config, overrides)
        return dispatch(cfg)
    except (ConfigError, DataError, DivergenceError, metrics.GateError) as exc:
        module = type(exc).__module__.rsplit(".", 1)[-1]
        print(f"error[{module}.{type(exc).__name__}]: {exc}", file=sys.stderr)
        return 2
    except OSError as exc:
        print(f"error[io]: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
