import sys
from pathlib import Path

sys.path.insert(0, str(Path(__file__).parent))

import pytest


@pytest.fixture(scope="session")
def overfit_run():
    """32 memorizable playlists trained for 200 epochs with val = train; shared by slow tests."""
    from playlist_titlegen.model import ModelConfig, Seq2SeqModel
    from playlist_titlegen.synth import SynthConfig, synth
    from playlist_titlegen.trainer import TrainConfig, restore, train
    from playlist_titlegen.vocab import build_input_vocab, build_output_vocab, encode

    ps = synth(SynthConfig(n_playlists=32, n_tracks=300, noise_fraction=0.0, seed=0))
    iv, ov = build_input_vocab(ps, "track"), build_output_vocab(ps)
    ex = [encode(p, iv, ov, "track") for p in ps]
    model = Seq2SeqModel.init(ModelConfig(len(iv), len(ov)), 0)
    # patience equal to the epoch budget so all 200 epochs run
    res = train(model, ex, ex, TrainConfig(batch_size=16, max_epochs=200, patience=200))
    restore(model, res.best_params)
    return {"playlists": ps, "examples": ex, "input_vocab": iv, "output_vocab": ov, "model": model, "result": res}


def pytest_terminal_summary(terminalreporter):
    mod = sys.modules.get("test_acceptance")
    if mod is not None and mod.RESULTS:
        terminalreporter.section("acceptance criteria")
        for line in sorted(mod.RESULTS):
            terminalreporter.write_line(line)
