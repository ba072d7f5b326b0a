import numpy as np
import pytest

from dyntmoe import checkpoint
from dyntmoe.errors import CheckpointError
from dyntmoe.model import ForecastModel
from dyntmoe.nn import param_digest
from helpers import micro_config, random_windows


def _grown_model():
    model = ForecastModel(micro_config(n_layers=2))
    model.add_expert("trend", 0)
    eid = model.add_expert("fluctuation", 1)
    model.remove_expert(0, eid)
    for p in model.parameters():
        p.data += 0.01
    model.archive([np.ones(4), np.arange(4.0)], 1)
    return model


def test_roundtrip_bit_exact(tmp_path):
    model = _grown_model()
    events = [{"event_id": 0, "action": "added"}]
    path = tmp_path / "m.bin"
    checkpoint.save(model, path, events, extra={"best_epoch": 3})
    loaded, manifest = checkpoint.load(path)
    assert param_digest(loaded.named_parameters()) == param_digest(model.named_parameters())
    assert [l.expert_ids for l in loaded.layers] == [l.expert_ids for l in model.layers]
    assert manifest["events"] == events and manifest["extra"] == {"best_epoch": 3}
    np.testing.assert_array_equal(loaded.layers[1].router.repository.states(),
                                  model.layers[1].router.repository.states())
    xs, _, os = random_windows(model.config)
    np.testing.assert_array_equal(loaded.predict(xs, os), model.predict(xs, os))
    assert checkpoint.to_bytes(loaded, events, {"best_epoch": 3}) == path.read_bytes()
    assert loaded._drift_counter == model._drift_counter


def test_bytes_are_deterministic():
    assert checkpoint.to_bytes(_grown_model()) == checkpoint.to_bytes(_grown_model())


@pytest.mark.parametrize("where", [0, 20, 200, -40, -1])
def test_corruption_detected(tmp_path, where):
    data = bytearray(checkpoint.to_bytes(_grown_model()))
    data[where] ^= 0xFF
    with pytest.raises(CheckpointError):
        checkpoint.from_bytes(bytes(data))


def test_truncated_and_missing(tmp_path):
    data = checkpoint.to_bytes(_grown_model())
    with pytest.raises(CheckpointError):
        checkpoint.from_bytes(data[:-100])
    with pytest.raises(CheckpointError):
        checkpoint.from_bytes(b"short")
    with pytest.raises(CheckpointError):
        checkpoint.load(tmp_path / "absent.bin")
