"""JSON-lines model server speaking the surplus external-learner protocol.

Start it through the host:

    surplus analyze --learner external \
        --external-cmd "python3 -m pylearner.server" ...

or run it by hand and type messages.  One process serves one model.  The
three requests, one JSON object per line:

    {"cmd": "fit", "id": 1, "X": [[...]], "y": [...], "mask": [1,0,...],
     "seed": 17, "hyperparams": {}}          -> {"id": 1, "ok": true}
    {"cmd": "predict", "id": 2, "X": [[...]]} -> {"id": 2, "yhat": [...]}
    {"cmd": "shutdown"}                       -> process exits 0

The model is scikit-learn's histogram gradient boosting regressor.  The
mask is enforced here, not trusted from the caller: fit trains only on
mask-included columns, and predict slices the same columns out of
whatever width the caller sends.  Bad input of any kind gets an error
reply and the loop keeps running; only shutdown or end of input stops it.
"""

import argparse
import json
import sys

import numpy as np

# host names on the left, scikit-learn names on the right
_HYPERPARAM_MAP = {
    "n_rounds": "max_iter",
    "max_depth": "max_depth",
    "learning_rate": "learning_rate",
}
_NATIVE_KEYS = {
    "max_iter",
    "max_depth",
    "learning_rate",
    "max_leaf_nodes",
    "min_samples_leaf",
    "l2_regularization",
    "max_bins",
}


def _translate_hyperparams(raw):
    out = {}
    for key, value in raw.items():
        if key in _HYPERPARAM_MAP:
            out[_HYPERPARAM_MAP[key]] = value
        elif key in _NATIVE_KEYS:
            out[key] = value
        else:
            raise ValueError("unknown hyperparameter %r" % key)
    return out


class LearnerServer:
    """One model, one process: the state machine behind serve()."""

    def __init__(self):
        self._model = None
        self._mask = None

    def handle(self, msg):
        """Return the reply dict for one request, or None for shutdown."""
        if not isinstance(msg, dict):
            return {"id": None, "error": "message must be a JSON object"}
        rid = msg.get("id")
        cmd = msg.get("cmd")
        if cmd == "shutdown":
            return None
        try:
            if cmd == "fit":
                self._fit(msg)
                return {"id": rid, "ok": True}
            if cmd == "predict":
                return {"id": rid, "yhat": self._predict(msg)}
        except Exception as exc:
            if cmd == "fit":
                return {"id": rid, "ok": False, "error": str(exc)}
            return {"id": rid, "error": str(exc)}
        return {"id": rid, "error": "unknown cmd %r" % (cmd,)}

    def _fit(self, msg):
        # imported here so a process that dies before fit never pays for it
        from sklearn.ensemble import HistGradientBoostingRegressor

        X = np.asarray(msg["X"], dtype=float)
        y = np.asarray(msg["y"], dtype=float)
        if X.ndim != 2 or y.ndim != 1 or X.shape[0] != y.shape[0]:
            raise ValueError("X must be rows x features with one y per row")
        mask = [int(b) for b in msg["mask"]]
        if len(mask) != X.shape[1] or any(b not in (0, 1) for b in mask):
            raise ValueError("mask must be 0/1 with one entry per column")
        cols = [j for j, b in enumerate(mask) if b]
        if not cols:
            raise ValueError("mask excludes every column")
        params = _translate_hyperparams(msg.get("hyperparams") or {})
        model = HistGradientBoostingRegressor(
            random_state=int(msg.get("seed", 0)) % 2**32,
            early_stopping=False,
            **params,
        )
        model.fit(X[:, cols], y)
        self._model, self._mask = model, mask

    def _predict(self, msg):
        if self._model is None:
            raise ValueError("no model fitted yet")
        X = np.asarray(msg["X"], dtype=float)
        if X.ndim != 2 or X.shape[1] != len(self._mask):
            raise ValueError(
                "predict expects %d columns, got shape %r"
                % (len(self._mask), list(np.shape(msg["X"])))
            )
        cols = [j for j, b in enumerate(self._mask) if b]
        yhat = self._model.predict(X[:, cols])
        if not np.all(np.isfinite(yhat)):
            raise ValueError("model produced non-finite predictions")
        return [float(v) for v in yhat]


def serve(stdin=None, stdout=None) -> int:
    stdin = stdin if stdin is not None else sys.stdin
    stdout = stdout if stdout is not None else sys.stdout
    server = LearnerServer()
    for line in stdin:
        line = line.strip()
        if not line:
            continue
        try:
            msg = json.loads(line)
        except json.JSONDecodeError as exc:
            reply = {"id": None, "error": "bad json: %s" % exc}
        else:
            reply = server.handle(msg)
            if reply is None:  # shutdown
                return 0
        stdout.write(json.dumps(reply, sort_keys=True) + "\n")
        stdout.flush()
    return 0  # host closed our input; nothing left to serve


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="pylearner-server", description=__doc__.splitlines()[0]
    )
    parser.parse_args(argv)
    return serve()


if __name__ == "__main__":
    sys.exit(main())
