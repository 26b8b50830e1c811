"""Pretty-printer for report JSON written by the surplus CLI.

    pylearner-report out/report.json

Understands analyze and evaluate documents: a manifest, a report with
per-feature weights (plus uncertainty columns when the method provides
them), and optional scores.  Output is a plain text table.
"""

import argparse
import json
import sys


def load_report(path):
    """Read one analyze/evaluate JSON document."""
    with open(path, encoding="utf-8") as fh:
        doc = json.load(fh)
    if not isinstance(doc, dict) or "report" not in doc:
        raise ValueError("%s is not an importance report document" % path)
    report = doc["report"]
    for key in ("method", "phi", "feature_names"):
        if key not in report:
            raise ValueError("report is missing %r" % key)
    return doc


def _source_line(manifest):
    if manifest.get("csv"):
        return "%s (target %s)" % (manifest["csv"], manifest.get("target", "y"))
    return "%s, n=%s" % (manifest.get("dataset", "?"), manifest.get("n", "?"))


def _fmt(value) -> str:
    return "%.6g" % value


def format_report(doc) -> str:
    manifest = doc.get("manifest", {})
    report = doc["report"]
    names = report["feature_names"]
    phi = report["phi"]
    diag = report.get("diagnostics")

    lines = []
    learner = manifest.get("learner", {})
    lines.append("method   %s" % report["method"])
    if manifest:
        lines.append("data     %s" % _source_line(manifest))
        lines.append("learner  %s" % (learner.get("kind", "?")))
        lines.append("seed     %s" % manifest.get("seed", "?"))
    lines.append("")

    headers = ["feature", "weight"]
    if diag is not None:
        headers += ["ci low", "ci high", "p>"]
    rows = []
    order = sorted(range(len(names)), key=lambda j: -phi[j])
    for j in order:
        row = [names[j], _fmt(phi[j])]
        if diag is not None:
            row += [_fmt(diag["ci_low"][j]), _fmt(diag["ci_high"][j]),
                    _fmt(diag["p_value_greater"][j])]
        rows.append(row)
    widths = [max(len(h), *(len(r[i]) for r in rows)) for i, h in enumerate(headers)]
    lines.append("  ".join(h.ljust(widths[i]) for i, h in enumerate(headers)).rstrip())
    for row in rows:
        lines.append("  ".join(v.rjust(widths[i]) if i else v.ljust(widths[i])
                               for i, v in enumerate(row)).rstrip())
    lines.append("")

    if "scores" in doc:
        scores = doc["scores"]
        lines.append("score    %s = %s" % (scores.get("metric"), _fmt(scores["score"])))
        lines.append("         angle %s, selective ratio %s"
                     % (_fmt(scores["angle"]), _fmt(scores["selective_ratio"])))
    lines.append("models fitted %s, retained fraction %s, wall time %ss"
                 % (report.get("n_models_fit", "?"),
                    _fmt(report["retained_fraction"]),
                    _fmt(report["wall_time"])))
    flags = report.get("flags") or []
    if flags:
        lines.append("flags: " + ", ".join(flags))
    return "\n".join(lines) + "\n"


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="pylearner-report", description=__doc__.splitlines()[0]
    )
    parser.add_argument("path", help="report JSON written by analyze or evaluate")
    args = parser.parse_args(argv)
    try:
        doc = load_report(args.path)
    except (OSError, ValueError, json.JSONDecodeError) as exc:
        sys.stderr.write("error: %s\n" % exc)
        return 1
    sys.stdout.write(format_report(doc))
    return 0


if __name__ == "__main__":
    sys.exit(main())
