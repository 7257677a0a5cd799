import os
import subprocess
import sys

import pytest

from cdlab import _parallel
from cdlab.errors import ConfigError, DomainError, UnboundedEntry, ValencyTooSmall


def square(x):
    return x * x


def test_pmap_keeps_order():
    items = list(range(23))
    assert _parallel.pmap(square, items, workers=1) == [x * x for x in items]
    assert _parallel.pmap(square, items, workers=2) == [x * x for x in items]
    assert _parallel.pmap(square, [], workers=4) == []


def test_worker_cap(monkeypatch):
    monkeypatch.setenv(_parallel.ENV_WORKERS, "1")
    assert _parallel.max_workers() == 1
    monkeypatch.setenv(_parallel.ENV_WORKERS, "0")
    assert _parallel.max_workers() == 1
    monkeypatch.setenv(_parallel.ENV_WORKERS, "many")
    with pytest.raises(ValueError):
        _parallel.max_workers()
    monkeypatch.delenv(_parallel.ENV_WORKERS)
    assert _parallel.max_workers() == (os.cpu_count() or 1)


def test_error_records():
    rec = UnboundedEntry(0, 2, 1 + 1j).record()
    assert rec["kind"] == "unbounded_entry" and (rec["i"], rec["j"]) == (0, 2)
    assert ValencyTooSmall(1.5).record()["valency"] == 1.5
    assert ConfigError("bad", "model/n").record()["path"] == "model/n"
    assert isinstance(DomainError("x"), ValueError)


def test_numpy_backend_selected_by_env():
    code = "from cdlab import _accel; print(_accel.backend())"
    env = {**os.environ, "CDLAB_DISABLE_NUMBA": "1"}
    out = subprocess.run([sys.executable, "-c", code], env=env, capture_output=True, text=True, timeout=120)
    assert out.stdout.strip() == "numpy"
