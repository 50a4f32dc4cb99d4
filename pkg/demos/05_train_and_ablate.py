"""
Training the four systems
=========================

A scaled-down version of the full ablation: a quarter of the corpus and a
dozen epochs, about a minute and a half on one core. Two seeds at this
scale are noisy; the desk-scale run is `ifdsed ablate` with the default
config.
"""

import tempfile
from pathlib import Path

from ifdsed.config import CorpusConfig, IfdConfig, RunConfig, TrainConfig
from ifdsed.corpus import generate_corpus
from ifdsed.trainer import load_dataset, run_ablation, run_experiment, system_config

# default network and features, a quarter of the corpus, fewer epochs
config = RunConfig(
    corpus=CorpusConfig(clips_per_domain=100, real_test_clips=40, synthetic_test_clips=40),
    ifd=IfdConfig(warmup_epochs=3),
    train=TrainConfig(epochs=12),
)

with tempfile.TemporaryDirectory() as tmp:
    tmp = Path(tmp)
    generate_corpus(config.corpus, tmp / "data")
    data = load_dataset(tmp / "data" / "manifest.jsonl", config)

    # one run: the loss log shows the IFD term switching on after warmup
    result = run_experiment(data, system_config(config, "sedb_ifd", seed=0), tmp / "run")
    for epoch, losses in result.epoch_log:
        print(epoch, losses)
    print(sorted(p.name for p in (tmp / "run").iterdir()))
    print("real-test event F1 %.3f" % result.reports["real_test"].event_macro_f1)

    # all four systems over two seeds
    table = run_ablation(data, config, seeds=[0, 1], out_dir=tmp / "ablation")
    print(table.format())
