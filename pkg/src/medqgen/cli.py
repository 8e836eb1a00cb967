"""Command-line entry point wiring the whole pipeline.

Subcommands: prep | embed | score | train-typer | train-gen | generate |
eval | pipeline. Every run writes a manifest (package version, seed,
config hash, artifact digests) next to its outputs; checkpoints embed
the same stamp in their header. Exit codes: 0 success, 1 usage/config
error, 2 data error, 3 numeric failure.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import os
import sys
from pathlib import Path

from . import __version__
from .config import (PROFILES, PipelineConfig, apply_env_overrides,
                     merge_config_file)
from .corpus import EntityDictionary, MaterialCorpus, load_pairs, save_pairs
from .cvae import GeneratorConfig, PhraseCVAE, TrainerConfig, train_generator
from .detector import SignificanceProfile, score_corpus
from .embeddings import EmbeddingTable, train_embeddings
from .errors import ConfigError, DataError, NumericError
from .generate import generate_corpus, load_batches, render_batches, save_batches
from .metrics import evaluate_batches
from .nn.checkpoint import load_checkpoint, save_checkpoint
from .synth import SynthSpec, synth_corpus
from .typetagger import TypeTagger, confusion_summary, split_heldout, train_tagger

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_DATA = 2
EXIT_NUMERIC = 3


class _Parser(argparse.ArgumentParser):
    # argparse exits 2 on usage errors by default; the contract says 1
    def error(self, message):
        self.print_usage(sys.stderr)
        print(f"{self.prog}: error: {message}", file=sys.stderr)
        raise SystemExit(EXIT_USAGE)


def build_parser() -> _Parser:
    parser = _Parser(prog="medqgen", description=__doc__)
    parser.add_argument("--config", help="YAML config file")
    parser.add_argument("--profile", choices=sorted(PROFILES),
                        default="desk", help="base profile (default: desk)")
    parser.add_argument("--seed", type=int, help="override config seed")
    parser.add_argument("--workdir", default=".",
                        help="base directory for relative config paths")
    sub = parser.add_subparsers(dest="command", required=True)
    for name, fn in SUBCOMMANDS.items():
        sub.add_parser(name, help=fn.__doc__)
    return parser


def resolve_config(args) -> PipelineConfig:
    """profile defaults <- config file overlay <- env vars <- --seed."""
    cfg = PROFILES[args.profile]()
    if args.config:
        cfg = merge_config_file(cfg, args.config)
    cfg = apply_env_overrides(cfg)
    if args.seed is not None:
        cfg.seed = args.seed
    cfg.validate()
    return cfg


class Runner:
    def __init__(self, cfg: PipelineConfig, workdir: str):
        self.cfg = cfg
        self.workdir = Path(workdir)
        self.stamp = {"seed": cfg.seed, "config_hash": cfg.config_hash(),
                      "version": __version__}

    def path(self, p) -> Path:
        p = Path(p)
        return p if p.is_absolute() else self.workdir / p

    # artifact paths ------------------------------------------------------
    @property
    def profiles_path(self):
        return self.path(self.cfg.paths.outputs) / "profiles.jsonl"

    @property
    def tagger_ckpt(self):
        return self.path(self.cfg.paths.checkpoints) / "tagger.ckpt"

    @property
    def generator_ckpt(self):
        return self.path(self.cfg.paths.checkpoints) / "generator.ckpt"

    @property
    def generated_path(self):
        return self.path(self.cfg.paths.outputs) / "generated.jsonl"

    def write_manifest(self, command: str, artifacts: list[Path]):
        digests = {}
        for artifact in sorted(set(map(str, artifacts))):
            digests[os.path.relpath(artifact, self.workdir)] = _sha256(artifact)
        manifest = dict(self.stamp, command=command, artifacts=digests)
        out = self.path(self.cfg.paths.outputs)
        out.mkdir(parents=True, exist_ok=True)
        path = out / f"manifest-{command}.json"
        path.write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n",
                        encoding="utf-8")
        return path

    # shared loading -------------------------------------------------------
    def load_inputs(self):
        pairs = load_pairs(self.path(self.cfg.paths.pairs))
        materials = MaterialCorpus.load(self.path(self.cfg.paths.materials))
        dictionary = EntityDictionary.load(self.path(self.cfg.paths.dictionary))
        return pairs, materials, dictionary

    def load_table(self) -> EmbeddingTable:
        return EmbeddingTable.load(self.path(self.cfg.paths.embeddings))

    def load_profiles(self, pairs) -> list[SignificanceProfile]:
        path = self.profiles_path
        if not path.exists():
            raise DataError(f"significance profiles not found: {path} (run 'score')")
        by_id = {}
        with open(path, encoding="utf-8") as fh:
            for line in fh:
                line = line.strip()
                if line:
                    rec = json.loads(line)
                    by_id[rec["id"]] = SignificanceProfile(
                        raw=list(rec["raw"]), normalized=list(rec["normalized"]))
        missing = [p.id for p in pairs if p.id not in by_id]
        if missing:
            raise DataError(f"profiles missing for pairs: {missing[:5]}")
        return [by_id[p.id] for p in pairs]


def _sha256(path) -> str:
    h = hashlib.sha256()
    h.update(Path(path).read_bytes())
    return h.hexdigest()


# subcommands ----------------------------------------------------------------

def cmd_prep(r: Runner):
    """Generate the bundled synthetic fixture corpus."""
    syn = r.cfg.synth
    pairs, materials, dictionary, _ = synth_corpus(
        SynthSpec(**{f: getattr(syn, f) for f in syn.__dataclass_fields__}),
        seed=r.cfg.seed)
    pairs_path = r.path(r.cfg.paths.pairs)
    save_pairs(pairs_path, pairs)
    materials_path = r.path(r.cfg.paths.materials)
    materials.save(materials_path)
    dict_path = r.path(r.cfg.paths.dictionary)
    dictionary.save(dict_path)
    print(f"prep: {len(pairs)} pairs, {len(materials)} documents, "
          f"{len(dictionary.surfaces)} dictionary entries")
    return [pairs_path, materials_path, dict_path]


def cmd_embed(r: Runner):
    """Pretrain word embeddings on the material corpus."""
    pairs, materials, _ = r.load_inputs()
    extra = sorted({t for p in pairs for t in list(p.answer) + p.question_tokens})
    table = train_embeddings(materials, dim=r.cfg.dims.embedding,
                             window=r.cfg.embedding.window,
                             epochs=r.cfg.embedding.epochs, seed=r.cfg.seed,
                             negatives=r.cfg.embedding.negatives,
                             lr=r.cfg.embedding.lr, extra_tokens=extra)
    path = r.path(r.cfg.paths.embeddings)
    table.save(path)
    print(f"embed: {table.matrix.shape[0]} vectors of dim {table.dim}")
    return [path]


def cmd_score(r: Runner):
    """Score phrase significance for every pair (detector)."""
    pairs, materials, _ = r.load_inputs()
    table = r.load_table()
    det = r.cfg.detector
    profiles = score_corpus(pairs, materials, table, m=det.retrieved_texts,
                            window=det.pool_window, split_len=det.doc_phrase_len,
                            split_stride=det.doc_phrase_stride,
                            k1=det.bm25_k1, b=det.bm25_b)
    path = r.profiles_path
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8") as fh:
        for pair, profile in zip(pairs, profiles):
            rec = {"id": pair.id,
                   "phrases": [" ".join(p.tokens) for p in pair.phrases],
                   "raw": profile.raw, "normalized": profile.normalized}
            fh.write(json.dumps(rec, ensure_ascii=False, sort_keys=True) + "\n")
    print(f"score: {len(profiles)} profiles -> {path}")
    return [path]


def cmd_train_typer(r: Runner):
    """Pretrain the Bi-LSTM-CRF word-type tagger."""
    pairs, _materials, dictionary = r.load_inputs()
    table = r.load_table()
    tagger, history = train_tagger(
        pairs, dictionary, table, hidden=r.cfg.dims.tagger_hidden,
        epochs=r.cfg.training.tagger_epochs, batch_size=r.cfg.training.batch_size,
        lr=r.cfg.training.tagger_lr, clip_norm=r.cfg.training.clip_norm,
        seed=r.cfg.seed, target_accuracy=r.cfg.training.tagger_target_accuracy)
    save_checkpoint(r.tagger_ckpt, tagger.state_dict(),
                    meta=dict(tagger.meta(), **r.stamp))
    held = split_heldout(pairs)[1]
    counts = confusion_summary(tagger, held, dictionary)
    report_path = r.path(r.cfg.paths.outputs) / "tagger-report.json"
    report_path.parent.mkdir(parents=True, exist_ok=True)
    tags = dictionary.type_names + ["OTHER"]
    report = {
        "epochs_run": len(history),
        "final_heldout_accuracy": history[-1]["heldout_accuracy"],
        "history": history,
        "confusion": {tags[g]: {tags[p]: int(counts[g, p])
                                for p in range(len(tags)) if counts[g, p]}
                      for g in range(len(tags))},
    }
    report_path.write_text(json.dumps(report, indent=2, sort_keys=True) + "\n",
                           encoding="utf-8")
    print(f"train-typer: heldout accuracy "
          f"{history[-1]['heldout_accuracy']:.4f} after {len(history)} epochs")
    return [r.tagger_ckpt, report_path]


def cmd_train_gen(r: Runner):
    """Train the phrase-CVAE generator."""
    pairs, _materials, dictionary = r.load_inputs()
    table = r.load_table()
    state, meta = load_checkpoint(r.tagger_ckpt)
    tagger = TypeTagger.from_state(table, state, meta)
    gen_cfg = generator_config(r.cfg, tagger)
    train_cfg = TrainerConfig(epochs=r.cfg.training.generator_epochs,
                              batch_size=r.cfg.training.batch_size,
                              lr=r.cfg.training.lr,
                              clip_norm=r.cfg.training.clip_norm,
                              anneal_batches=r.cfg.training.anneal_batches)
    model, log = train_generator(pairs, tagger, table, dictionary, gen_cfg,
                                 train_cfg, seed=r.cfg.seed)
    save_checkpoint(r.generator_ckpt, model.state_dict(),
                    meta=dict(model.meta(), **r.stamp))
    log_path = r.path(r.cfg.paths.outputs) / "loss-log.jsonl"
    log_path.parent.mkdir(parents=True, exist_ok=True)
    with open(log_path, "w", encoding="utf-8") as fh:
        for rec in log:
            fh.write(json.dumps(rec, sort_keys=True) + "\n")
    print(f"train-gen: {len(log)} batches; final total "
          f"{log[-1]['total']:.4f} (recon {-log[-1]['recon_ll']:.4f})")
    return [r.generator_ckpt, log_path]


def generator_config(cfg: PipelineConfig, tagger: TypeTagger) -> GeneratorConfig:
    return GeneratorConfig(
        embedding_dim=cfg.dims.embedding,
        phrase_hidden=cfg.dims.phrase_encoder,
        context_hidden=cfg.dims.context,
        latent_dim=cfg.dims.latent,
        mlp_hidden=cfg.dims.mlp_hidden,
        decoder_hidden=cfg.dims.decoder,
        entity_dim=cfg.dims.entity_embedding,
        type_dim=tagger.type_vector_dim,
        use_type_pass=cfg.training.use_type_pass,
        use_entity_pass=cfg.training.use_entity_pass,
        bow_weight=cfg.training.bow_weight,
    )


def cmd_generate(r: Runner):
    """Sample N candidate questions per pair with beam search."""
    pairs, _materials, _dictionary = r.load_inputs()
    table = r.load_table()
    state, meta = load_checkpoint(r.generator_ckpt)
    model = PhraseCVAE.from_state(table, state, meta)
    profiles = r.load_profiles(pairs)
    gen = r.cfg.generation
    batches = generate_corpus(pairs, profiles, model, n_samples=gen.n_samples,
                              beam_width=gen.beam_width,
                              max_phrase_len=gen.max_phrase_len, seed=r.cfg.seed)
    save_batches(r.generated_path, batches)
    text_path = r.generated_path.with_suffix(".txt")
    text_path.write_text(render_batches(batches), encoding="utf-8")
    n_samples = sum(len(b.samples) for b in batches)
    print(f"generate: {n_samples} samples over {len(batches)} pairs")
    return [r.generated_path, text_path]


def cmd_eval(r: Runner):
    """Evaluate generated questions against their sources."""
    pairs, _materials, _dictionary = r.load_inputs()
    table = r.load_table()
    batches = load_batches(r.generated_path)
    report = evaluate_batches(batches, {p.id: p for p in pairs}, table)
    out = r.path(r.cfg.paths.outputs)
    out.mkdir(parents=True, exist_ok=True)
    record_path = out / "metrics.jsonl"
    with open(record_path, "w", encoding="utf-8") as fh:
        fh.write(json.dumps(dict(report.as_record(), method="medqgen"),
                            sort_keys=True) + "\n")
    table_path = out / "metrics.txt"
    table_path.write_text(report.render_table("medqgen") + "\n", encoding="utf-8")
    print(report.render_table("medqgen"))
    return [record_path, table_path]


def cmd_pipeline(r: Runner):
    """All stages in order: prep, embed, score, train-typer, train-gen, generate, eval."""
    artifacts = []
    for fn in (cmd_prep, cmd_embed, cmd_score, cmd_train_typer, cmd_train_gen,
               cmd_generate, cmd_eval):
        artifacts.extend(fn(r))
    return artifacts


SUBCOMMANDS = {
    "prep": cmd_prep,
    "embed": cmd_embed,
    "score": cmd_score,
    "train-typer": cmd_train_typer,
    "train-gen": cmd_train_gen,
    "generate": cmd_generate,
    "eval": cmd_eval,
    "pipeline": cmd_pipeline,
}


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        cfg = resolve_config(args)
        runner = Runner(cfg, args.workdir)
        artifacts = SUBCOMMANDS[args.command](runner)
        runner.write_manifest(args.command, artifacts)
        return EXIT_OK
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except DataError as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except (NumericError, FloatingPointError) as exc:
        print(f"numeric failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC


if __name__ == "__main__":
    sys.exit(main())
