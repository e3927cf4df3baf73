"""Config-driven experiment runner.

Usage::

    covlab <tag> [--config PATH] [--out DIR] [--seed N] [--budget-points N]
                 [--budget-nodes N] [--refine-tol X] [--radius R]

Config files are flat ``key = value`` text, one key per line, ``#`` starts a
comment.  Lists are comma separated.  Keys (all optional unless noted):

    family          space family (covspec, cover, sequence)
    j               family index, default 1
    j_list          indices for sequence and example tags
    mesh            sample spacing, family default otherwise
    delta_min, delta_max   spectrum scan window
    radius          truncation radius R (default 4)
    refine_tol      bracket width (default 0.05)
    basepoint       base point id (default 0)
    delta           cover scale (cover tag)
    deltas          lift-count sweep scales (cover tag)
    space_a, space_b    space files (gh tag)
    V0, D0          volume and diameter bounds (sequence tag)
    track, ball_radius  ball-volume trend (sequence tag)
    handles_j       indices of the handles flat-bound chain (flatbound tag)
    eps, diam_u1, diam_u2, lam, vol_u1, vol_u2, bdry_u1, bdry_u2,
    vol_rest1, vol_rest2, margin   explicit flat-bound inputs (flatbound tag)
    cap_radius, tunnel_height, tunnel_radius, handle_width, eta   family shape
    write_spaces    1 to write every generated space file
    seed, budget_points, budget_nodes, wall_clock_hint

Exit status: 0 success, 1 malformed input, 2 failed certification (the
invariant is named on stderr and in ``status.txt``), 3 budget exhausted
(partial artifacts are listed in ``PARTIAL``).
"""

from __future__ import annotations

import argparse
import math
import sys
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Dict, List, Optional

import numpy as np

from covlab import convergence as cv
from covlab import io
from covlab.core_metric import check_metric_axioms
from covlab.covers import lifting
from covlab.covers.spectrum import CovSpecReport, covering_spectrum
from covlab.errors import BudgetExceeded, ConfigError, CovlabError, InvariantViolation
from covlab.gallery.examples import ZERO, ExampleParams, build_example, limit_space, sequence

TAGS = ("covspec", "cover", "gh", "flatbound", "sequence", "example-2spheres", "example-product",
        "example-hole", "example-tunnels", "example-handles")

_FLOAT = {"mesh", "delta_min", "delta_max", "radius", "refine_tol", "delta", "V0", "D0",
          "ball_radius", "eps", "diam_u1", "diam_u2", "lam", "vol_u1", "vol_u2", "bdry_u1",
          "bdry_u2", "vol_rest1", "vol_rest2", "margin", "cap_radius", "tunnel_height",
          "tunnel_radius", "handle_width", "eta", "wall_clock_hint", "area_w"}
_INT = {"j", "basepoint", "seed", "budget_points", "budget_nodes", "write_spaces", "grid_points"}
_INT_LIST = {"j_list", "handles_j"}
_FLOAT_LIST = {"deltas"}
_STR = {"family", "space_a", "space_b", "track"}
KEYS = _FLOAT | _INT | _INT_LIST | _FLOAT_LIST | _STR

# per-tag defaults for the example reproductions
EXAMPLES = {
    "example-2spheres": dict(family="two_spheres_reduced", j_list=[1, 2], delta_min=0.8, delta_max=2.4),
    "example-product": dict(family="product_reduced", j_list=[1], delta_min=0.35, delta_max=2.0, radius=2.0),
    "example-hole": dict(family="hole_reduced", j_list=[2, 4, 8], delta_min=0.5, delta_max=2.2),
    "example-tunnels": dict(family="tunnels", j_list=[2, 3], delta_min=0.2, delta_max=2.8, radius=3.0,
                            refine_tol=0.08),
    "example-handles": dict(family="handles", j_list=[1, 2], delta_min=1.2, delta_max=2.8),
}


@dataclass
class ExperimentConfig:
    tag: str
    values: Dict[str, object] = field(default_factory=dict)
    out: Path = Path("covlab-out")

    def get(self, key, default=None):
        return self.values.get(key, default)

    def require(self, key):
        if key not in self.values:
            raise ConfigError("missing required key", field=key)
        return self.values[key]

    def validate(self) -> None:
        if self.tag not in TAGS:
            raise ConfigError(f"unknown experiment tag {self.tag!r}; choose from {', '.join(TAGS)}")
        for k in ("budget_points", "budget_nodes", "radius", "refine_tol", "mesh"):
            v = self.values.get(k)
            if v is not None and not v > 0:
                raise ConfigError("must be positive", field=k)


def _convert(key, raw, line):
    try:
        if key in _FLOAT:
            return float(raw)
        if key in _INT:
            return int(raw)
        if key in _INT_LIST:
            return [int(v) for v in raw.split(",") if v.strip()]
        if key in _FLOAT_LIST:
            return [float(v) for v in raw.split(",") if v.strip()]
        return raw
    except ValueError:
        raise ConfigError(f"cannot parse {raw!r}", line=line, field=key) from None


def parse_config(text: str) -> Dict[str, object]:
    out: Dict[str, object] = {}
    for no, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError("expected 'key = value'", line=no)
        key, raw = (s.strip() for s in line.split("=", 1))
        if key not in KEYS:
            raise ConfigError("unknown key", line=no, field=key)
        if key in out:
            raise ConfigError("duplicate key", line=no, field=key)
        out[key] = _convert(key, raw, no)
    return out


# helpers ---------------------------------------------------------------------

class _Run:
    def __init__(self, cfg: ExperimentConfig):
        self.cfg = cfg
        self.out = cfg.out
        self.partial: List[str] = []
        self.failures: List[str] = []
        self.notes: List[str] = []

    def path(self, name) -> Path:
        return self.out / name

    def params(self, family, j=1) -> ExampleParams:
        g = self.cfg.get
        extra = {}
        if g("budget_points") is not None:
            extra["point_budget"] = g("budget_points")
        return ExampleParams(family, j=j, mesh=g("mesh"), cap_radius=g("cap_radius", math.pi / 10),
                             tunnel_height=g("tunnel_height"), tunnel_radius=g("tunnel_radius"),
                             handle_width=g("handle_width"), eta=g("eta"), seed=g("seed", 0), extra=extra)

    def check_axioms(self, space, name):
        rep = check_metric_axioms(space, tol=1e-6)
        if not rep.passed:
            self.failures.append(f"metric axioms ({name})")

    def spectrum(self, space, name) -> CovSpecReport:
        g = self.cfg.get
        lo, hi = g("delta_min"), g("delta_max")
        rng = (lo, hi) if lo is not None and hi is not None else None
        kw = {}
        if g("budget_nodes") is not None:
            kw["node_budget"] = g("budget_nodes")
        rep = covering_spectrum(space, delta_range=rng, R=g("radius", 4.0),
                                refine_tol=g("refine_tol", 0.05), basepoint=g("basepoint", 0),
                                grid_points=g("grid_points", 6), **kw)
        rep.to_csv(self.path(f"{name}_spectrum.csv"))
        if any(why == "node budget exceeded" for _, _, why in rep.uncertified):
            self.partial.append(f"{name}_spectrum.csv")
        if rep.monotone_violations:
            self.failures.append(f"cover monotonicity ({name})")
        self.notes.append(f"[{name}]\n{rep.summary()}")
        return rep

    def finish(self) -> int:
        lines = self.notes[:]
        if self.failures:
            status = 2
            lines.append("FAILED: " + "; ".join(self.failures))
            print("certification failed: " + "; ".join(self.failures), file=sys.stderr)
        elif self.partial:
            status = 3
            (self.out / "PARTIAL").write_text("\n".join(self.partial) + "\n", encoding="utf-8")
        else:
            status = 0
        self.path("summary.txt").write_text("\n\n".join(lines) + "\n", encoding="utf-8")
        self.path("status.txt").write_text(f"{status}\n", encoding="utf-8")
        return status


def emit_plot_data(report, path) -> List[Path]:
    """(x, y) series for a spectrum (midpoints), trend, or lift sweep."""
    path = Path(path)
    if isinstance(report, CovSpecReport):
        mids = [0.5 * (b.delta_low + b.delta_high) for b in report.brackets]
        io.write_series(path, range(len(mids)), mids, ("bracket", "delta"))
    elif isinstance(report, cv.VolumeTrend):
        io.write_series(path, report.js, report.series, ("j", "volume"))
    else:
        xs, ys = report
        io.write_series(path, xs, ys, ("delta", "lifts"))
    return [path]


def _trajectory(run: _Run, family: str, js, with_limit=True):
    rows = []
    seq_meta = {}
    for j in js:
        s = build_example(run.params(family, j))
        run.check_axioms(s, f"M_{j}")
        rep = run.spectrum(s, f"M_{j}")
        seq_meta[j] = s
        rows += [(j, b.delta_low, b.delta_high, int(b.certified)) for b in rep.brackets] or [(j, "", "", "")]
    if with_limit:
        lim = limit_space(family, run.params(family))
        run.check_axioms(lim, "limit")
        rep = run.spectrum(lim, "limit")
        rows += [("inf", b.delta_low, b.delta_high, int(b.certified)) for b in rep.brackets] or [("inf", "", "", "")]
    io.write_csv(run.path("spectrum_vs_j.csv"), ["j", "delta_low", "delta_high", "certified"], rows)
    return seq_meta


# experiments -----------------------------------------------------------------

def _covspec(run: _Run):
    cfg = run.cfg
    s = build_example(run.params(cfg.require("family"), cfg.get("j", 1)))
    run.check_axioms(s, "space")
    rep = run.spectrum(s, "space")
    emit_plot_data(rep, run.path("spectrum_plot.csv"))


def _cover(run: _Run):
    cfg = run.cfg
    s = build_example(run.params(cfg.require("family"), cfg.get("j", 1)))
    bp = cfg.get("basepoint", 0)
    R = cfg.get("radius", 4.0)
    kw = {"node_budget": cfg.get("budget_nodes")} if cfg.get("budget_nodes") else {}
    deltas = cfg.get("deltas") or [cfg.require("delta")]
    rows, lifts = [], []
    for d in deltas:
        c = lifting.truncated_cover(s, d, basepoint=bp, R=R, **kw)
        lc = lifting.lift_count(c, bp)
        comp = lifting.cover_components(c)
        rows.append((d, c.n_nodes, lc.count, int(lc.exact), comp.n_components, int(c.closed), int(c.budget_hit)))
        lifts.append(lc.count)
        if c.budget_hit:
            run.partial.append("cover.csv")
    io.write_csv(run.path("cover.csv"), ["delta", "nodes", "lifts", "exact", "components", "closed",
                                         "budget_hit"], rows)
    emit_plot_data((deltas, lifts), run.path("lifts_vs_delta.csv"))
    run.notes.append("\n".join(f"delta={r[0]:.6g}: {r[2]} lifts of {bp} ({'exact' if r[3] else 'lower bound'})"
                               for r in rows))


def _gh(run: _Run):
    a = io.read_space(run.cfg.require("space_a"))
    b = io.read_space(run.cfg.require("space_b"))
    est = cv.gh_lower_bound(a, b, seed=run.cfg.get("seed", 0))
    io.write_csv(run.path("gh.csv"), ["value", "mode", "certified_lower"],
                 [(est.value, est.label, est.certified_lower)])
    run.notes.append(f"GH estimate {est.value!r} ({est.label}); certified lower bound {est.certified_lower!r}")


_FB = ("eps", "diam_u1", "diam_u2", "lam", "vol_u1", "vol_u2", "bdry_u1", "bdry_u2", "vol_rest1", "vol_rest2")


def _flatbound(run: _Run):
    cfg = run.cfg
    header = ["j", "eps", "lam", "a", "h", "h_bar", "bound", "composed"]
    rows = []
    if cfg.get("eps") is not None:
        x = cv.FlatBoundInputs(*[float(cfg.require(k)) for k in _FB], margin=cfg.get("margin", 1.01))
        r = cv.flat_bound(x)
        rows.append(("", x.eps, x.lam, r.a, r.h, r.h_bar, r.bound, ""))
    else:
        prev = math.inf
        for j in cfg.get("handles_j") or [1, 2, 3, 4, 5]:
            ch = cv.handles_chain(j, area_w=cfg.get("area_w", math.pi))
            r = cv.flat_bound(ch.inputs)
            rows.append((j, ch.inputs.eps, ch.inputs.lam, r.a, r.h, r.h_bar, r.bound, ch.composed))
            if r.bound > ch.composed + 1e-9:
                run.failures.append(f"flat bound exceeds composed estimate at j={j}")
            if r.bound >= prev:
                run.failures.append(f"flat bound not decreasing at j={j}")
            prev = r.bound
    io.write_csv(run.path("flatbound.csv"), header, rows)
    run.notes.append("\n".join(f"bound {row[6]!r}" for row in rows))


def _sequence(run: _Run, family=None, js=None):
    cfg = run.cfg
    family = family or cfg.require("family")
    js = js or cfg.get("j_list") or [1, 2, 3]
    seq = sequence(family, js, run.params(family), V0=cfg.get("V0"), D0=cfg.get("D0"),
                   with_limit=family == "thin_tori")
    seq.to_csv(run.path("sequence.csv"))
    for j, s in seq.members:
        run.check_axioms(s, f"M_{j}")
        if cfg.get("write_spaces"):
            io.write_space(s, run.path(f"M_{j}.space"))
    vols = [seq.meta[j]["volume"] for j in seq.js]
    io.write_series(run.path("volume_vs_j.csv"), seq.js, vols, ("j", "volume"))
    run.notes.append(f"family {family}: limit {'ZERO' if seq.limit is ZERO else 'space'}")
    track = cfg.get("track")
    if track is not None or family == "thin_tori":
        r = cfg.get("ball_radius", 2.0 if family == "thin_tori" else 0.5)
        tr = track if track is not None else (lambda j, s: 0)
        trend = cv.ball_volume_trend(seq, tr, r)
        emit_plot_data(trend, run.path("ball_volume_vs_j.csv"))
        run.notes.append(f"ball volume trend ({track or 'point 0'}, r={r}): {trend.verdict}")
    return seq


def _example(run: _Run):
    tag = run.cfg.tag
    base = EXAMPLES[tag]
    for k, v in base.items():
        run.cfg.values.setdefault(k, v)
    fam = run.cfg.get("family")
    js = run.cfg.get("j_list")
    if tag == "example-product":
        # the factor spectrum on the circle product, then the limit cover structure
        s = build_example(run.params(fam))
        run.check_axioms(s, "product")
        run.spectrum(s, "product")
        lim = limit_space(fam, run.params(fam))
        half = lim.n // 2
        c = lifting.truncated_cover(lim, 1.3, basepoint=[0, half], R=run.cfg.get("radius", 4.0))
        comp = lifting.cover_components(c)
        io.write_csv(run.path("limit_components.csv"), ["component", "lifts", "size"],
                     [(i, n, sz) for i, (n, sz) in enumerate(zip(comp.lifts_per_component, comp.sizes))])
        run.notes.append(f"limit model: N1={comp.n_components}, lifts {comp.lifts_per_component}, "
                         f"N={comp.total}")
        if not comp.consistent:
            run.failures.append("finite cover factorization")
        return
    _trajectory(run, fam, js, with_limit=True)
    if tag == "example-tunnels":
        seq = sequence(fam, [1, 2, 3, 4], run.params(fam), with_limit=False)
        for track, expect in (("cap", cv.DISAPPEARS), ("equator", cv.PERSISTS)):
            trend = cv.ball_volume_trend(seq, track, 0.2)
            emit_plot_data(trend, run.path(f"ball_volume_{track}.csv"))
            run.notes.append(f"{track}: {trend.verdict}")
    if tag == "example-handles":
        rows = []
        for j in js:
            s = build_example(run.params(fam, j))
            b = int(np.flatnonzero(s.meta["labels"] == "hole0")[0])
            g = lifting.lift_growth(s, math.pi / 2, np.arange(1.0, 16.5, 1.0), basepoint=b)
            rows += [(j, r, c) for r, c in zip(g.radii, g.counts)]
            run.notes.append(f"j={j}: lift growth at pi/2 {g.kind} (ratio {g.ratio:.3g}); expected deltas "
                             + ", ".join(f"{d:.6g}" for d in s.meta["critical_deltas"]))
        io.write_csv(run.path("lift_growth.csv"), ["j", "radius", "lifts"], rows)


DISPATCH = {"covspec": _covspec, "cover": _cover, "gh": _gh, "flatbound": _flatbound,
            "sequence": _sequence}


def run_experiment(cfg: ExperimentConfig) -> int:
    cfg.validate()
    cfg.out.mkdir(parents=True, exist_ok=True)
    run = _Run(cfg)
    try:
        DISPATCH.get(cfg.tag, _example)(run)
    except BudgetExceeded as exc:
        run.partial.append(str(exc))
        run.notes.append(f"budget exhausted: {exc}")
    except InvariantViolation as exc:
        run.failures.append(str(exc))
    return run.finish()


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="covlab", description="Covering-spectrum and convergence experiments.")
    ap.add_argument("tag", choices=TAGS)
    ap.add_argument("--config", type=Path)
    ap.add_argument("--out", type=Path, default=Path("covlab-out"))
    ap.add_argument("--seed", type=int)
    ap.add_argument("--budget-points", type=int, dest="budget_points")
    ap.add_argument("--budget-nodes", type=int, dest="budget_nodes")
    ap.add_argument("--refine-tol", type=float, dest="refine_tol")
    ap.add_argument("--radius", type=float)
    return ap


def main(argv: Optional[List[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        values = {}
        if args.config is not None:
            try:
                text = args.config.read_text(encoding="utf-8")
            except OSError as exc:
                raise ConfigError(f"cannot read config: {exc}") from None
            values = parse_config(text)
        for k in ("seed", "budget_points", "budget_nodes", "refine_tol", "radius"):
            v = getattr(args, k)
            if v is not None:
                values[k] = v
        cfg = ExperimentConfig(args.tag, values, args.out)
        return run_experiment(cfg)
    except BudgetExceeded as exc:
        print(f"budget exhausted: {exc}", file=sys.stderr)
        return 3
    except (ConfigError, CovlabError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
