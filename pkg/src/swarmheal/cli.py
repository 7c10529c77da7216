"""Experiment runner and analytics reporter.

Commands:
  sim run --config <file> [KEY=VALUE ...]   batch-run a scenario, write CSVs,
                                            a summary table, and a figure
  sim report-analytics [--out-dir DIR]      closed-form cost/latency tables
  sim gen-topology --kind K --nodes N --seed S --out FILE

Relative output directories resolve under $SIM_OUT_ROOT when it is set.
"""

from __future__ import annotations

import os
import random
from pathlib import Path
from typing import Optional, Sequence

import click

from .analytics import expected_transmitters, single_transmitter_prob
from .bloom import (
    bloom_extra_bits,
    expected_download_chunks,
    false_positive_rate,
    naive_table_bits,
    prob_full_download,
    secram_bits,
)
from .config import BTREE, MESH, TTREE, ConfigError, build_scenario, build_topology, describe, parse_config
from .engine import CSV_HEADER, MetricsTimeline, mean_samples, run_scenario, samples_to_csv
from .topology import gen_mesh, gen_tree, write_topology

# the worked memory example: 1024-bit public keys, 128-bit digests/keys,
# 256-bit certificates, 4 filter keys, 8 bits per chunk, 64 chunks
MEM_EXAMPLE = dict(pk_bits=1024, ell=128, cert_bits=256, num_keys=4, mu=8,
                   chunk_count=64, lambda_bits=32, key_bits=128)


def _out_root() -> Path:
    return Path(os.environ.get("SIM_OUT_ROOT", "."))


def _resolve_out(out_dir: str) -> Path:
    path = Path(out_dir)
    if not path.is_absolute():
        path = _out_root() / path
    path.mkdir(parents=True, exist_ok=True)
    return path


def _fmt_opt(value: Optional[float]) -> str:
    return "-" if value is None else f"{value:g}"


@click.group()
def main() -> None:
    """Self-healing device-network simulator."""


# --------------------------------------------------------------------------- run


def _summary_rows(timelines: Sequence[MetricsTimeline], mean_rows) -> list:
    def crossing(samples, what, frac):
        for row in samples:
            if getattr(row, what) >= frac:
                return row.time
        return None

    rows = []
    for tl in timelines:
        rows.append((
            str(tl.seed),
            tl.time_to_reach("frac_correct", 0.95),
            tl.time_to_reach("frac_correct", 1.0),
            tl.time_to_reach("frac_updated", 1.0),
            max(r.frac_blank for r in tl.samples),
        ))
    rows.append((
        "mean",
        crossing(mean_rows, "frac_correct", 0.95),
        crossing(mean_rows, "frac_correct", 1.0),
        crossing(mean_rows, "frac_updated", 1.0),
        max(r.frac_blank for r in mean_rows),
    ))
    return rows


def _write_summary(path: Path, rows) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("seed,t95_correct,t100_correct,t100_updated,peak_blank\n")
        for seed, t95, t100, tup, peak in rows:
            cells = [seed] + ["" if v is None else f"{v:g}" for v in (t95, t100, tup)]
            cells.append(f"{peak:.9f}")
            fh.write(",".join(cells) + "\n")


def _render_fractions(path: Path, mean_rows) -> None:
    import matplotlib
    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    times = [r.time for r in mean_rows]
    fig, ax = plt.subplots(figsize=(8, 4.5))
    ax.plot(times, [r.frac_corrupt_undetected for r in mean_rows],
            label="corrupt (undetected)", color="#c0392b")
    ax.plot(times, [r.frac_blank for r in mean_rows], label="blank",
            color="#7f8c8d")
    ax.plot(times, [r.frac_correct for r in mean_rows], label="correct",
            color="#27ae60")
    ax.plot(times, [r.frac_updated for r in mean_rows], label="updated",
            color="#2980b9", linestyle="--")
    ax.set_xlabel("time (s)")
    ax.set_ylabel("fraction of devices")
    ax.set_ylim(-0.02, 1.02)
    ax.legend(loc="center right")
    ax.grid(alpha=0.3)
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)


@main.command("run")
@click.option("--config", "config_path", type=click.Path(exists=True, dir_okay=False),
              default=None, help="Flat key=value scenario file.")
@click.option("--out-dir", "out_dir_flag", default=None,
              help="Output directory (overrides the config's out_dir).")
@click.argument("overrides", nargs=-1)
def run_cmd(config_path: Optional[str], out_dir_flag: Optional[str],
            overrides: Sequence[str]) -> None:
    """Run a seeded batch and write timelines, summary, and figure.

    OVERRIDES are KEY=VALUE pairs applied on top of the config file.
    """
    try:
        cfg = parse_config(config_path, overrides)
        if out_dir_flag is not None:
            cfg = parse_config(config_path, list(overrides) + [f"out_dir={out_dir_flag}"])
        topo = build_topology(cfg)
        scenario = build_scenario(cfg, topo)
    except (ConfigError, ValueError) as exc:
        raise click.ClickException(str(exc))

    out = _resolve_out(cfg.out_dir)
    (out / "config.txt").write_text(describe(cfg) + "\n", encoding="utf-8")
    write_topology(topo, out / "topology.txt")

    timelines = []
    for seed in cfg.seeds:
        tl = run_scenario(scenario, seed)
        tl.write_csv(out / f"seed-{seed}.csv")
        timelines.append(tl)
        click.echo(f"seed {seed}: correct {tl.final.frac_correct:.4f}, "
                   f"updated {tl.final.frac_updated:.4f}")

    mean_rows = mean_samples([tl.samples for tl in timelines])
    (out / "mean.csv").write_text(samples_to_csv(mean_rows), encoding="utf-8")

    rows = _summary_rows(timelines, mean_rows)
    _write_summary(out / "summary.csv", rows)
    _render_fractions(out / "fractions.png", mean_rows)

    click.echo()
    click.echo("seed   t95_correct  t100_correct  t100_updated  peak_blank")
    for seed, t95, t100, tup, peak in rows:
        click.echo(f"{seed:<6} {_fmt_opt(t95):>11}  {_fmt_opt(t100):>12}  "
                   f"{_fmt_opt(tup):>12}  {peak:10.4f}")
    click.echo(f"\nwrote {len(timelines)} seed timelines, mean.csv, "
               f"summary.csv, fractions.png to {out}")


# -------------------------------------------------------------- report-analytics


def _transmitter_lines() -> list:
    lines = ["Expected code transmitters per request (m same-version neighbors)"]
    table = ", ".join(
        f"{m}: {float(expected_transmitters(m)):.2f}" for m in (2, 5, 10, 20)
    )
    lines.append("  " + table)
    lines.append("  m    E[transmitters]      Pr[exactly one]")
    for m in (1, 2, 3, 4, 5, 6, 10, 20):
        e = expected_transmitters(m)
        p1 = f"{float(single_transmitter_prob(m)):.6f}" if m >= 2 else "-"
        frac = f"= {e}" if m <= 6 else ""
        lines.append(f"  {m:<4} {float(e):.6f} {frac:<12} {p1}")
    return lines


def _memory_lines() -> list:
    extra_bits = bloom_extra_bits(MEM_EXAMPLE["ell"], MEM_EXAMPLE["num_keys"],
                                  MEM_EXAMPLE["mu"], MEM_EXAMPLE["chunk_count"])
    naive_bits = naive_table_bits(MEM_EXAMPLE["ell"], MEM_EXAMPLE["chunk_count"])
    ratio = naive_bits / extra_bits
    lines = ["Secure-memory budget (64-chunk image, 4 filter keys, 8 bits/chunk)"]
    lines.append(f"  bloom extra: {extra_bits // 8} bytes ({ratio:.1f}x vs naive)")
    lines.append(f"  naive per-chunk digest table: {naive_bits // 8} bytes")
    for neighbors in (0, 8):
        total = secram_bits(num_neighbors=neighbors, **MEM_EXAMPLE)
        lines.append(f"  total with {neighbors} neighbors: {total} bits"
                     f" ({(total + 7) // 8} bytes)")
    return lines


def _download_lines() -> list:
    mu, keys, count = 8, 4, 64
    p = false_positive_rate(keys, mu)
    lines = ["Expected recovery download (64 chunks, tampered-chunk localization)"]
    lines.append(f"  per-chunk false-positive rate: {p:.6f}")
    for kappa in (1, 2, 4, 8):
        full = prob_full_download(p, kappa)
        chunks = expected_download_chunks(count, p, kappa)
        lines.append(f"  kappa={kappa}: full-download probability {full:.6f}, "
                     f"expected chunks {chunks:.2f}")
    return lines


def _write_analytics_files(out: Path) -> None:
    with open(out / "transmitters.csv", "w", encoding="utf-8") as fh:
        fh.write("m,expected_transmitters,prob_single\n")
        for m in range(1, 21):
            p1 = f"{float(single_transmitter_prob(m)):.9f}" if m >= 2 else ""
            fh.write(f"{m},{float(expected_transmitters(m)):.9f},{p1}\n")
    mu, keys, count = 8, 4, 64
    p = false_positive_rate(keys, mu)
    with open(out / "download.csv", "w", encoding="utf-8") as fh:
        fh.write("kappa,prob_full_download,expected_chunks\n")
        for kappa in range(1, 17):
            fh.write(f"{kappa},{prob_full_download(p, kappa):.9f},"
                     f"{expected_download_chunks(count, p, kappa):.9f}\n")
    with open(out / "memory.csv", "w", encoding="utf-8") as fh:
        fh.write("neighbors,secram_bits,secram_bytes\n")
        for neighbors in range(0, 17):
            total = secram_bits(num_neighbors=neighbors, **MEM_EXAMPLE)
            fh.write(f"{neighbors},{total},{(total + 7) // 8}\n")

    import matplotlib
    matplotlib.use("Agg")
    import matplotlib.pyplot as plt
    import math

    ms = list(range(1, 21))
    fig, ax = plt.subplots(figsize=(6, 3.6))
    ax.plot(ms, [float(expected_transmitters(m)) for m in ms], marker="o",
            label="E[transmitters]")
    limit = math.e / (math.e - 1)
    ax.axhline(limit, color="#c0392b", linestyle=":",
               label=f"limit e/(e-1) = {limit:.3f}")
    ax.set_xlabel("same-version neighbors m")
    ax.set_ylabel("expected transmitters")
    ax.grid(alpha=0.3)
    ax.legend()
    fig.tight_layout()
    fig.savefig(out / "transmitters.png", dpi=120)
    plt.close(fig)

    kappas = list(range(1, 17))
    fig, ax = plt.subplots(figsize=(6, 3.6))
    ax.plot(kappas, [expected_download_chunks(count, p, k) for k in kappas],
            marker="s", color="#2980b9")
    ax.set_xlabel("tampered chunks kappa")
    ax.set_ylabel("expected chunks downloaded")
    ax.grid(alpha=0.3)
    fig.tight_layout()
    fig.savefig(out / "download.png", dpi=120)
    plt.close(fig)


@main.command("report-analytics")
@click.option("--out-dir", default=None,
              help="Also write CSV tables and figures to this directory.")
def report_analytics_cmd(out_dir: Optional[str]) -> None:
    """Print the closed-form communication and memory cost tables."""
    sections = [_transmitter_lines(), _memory_lines(), _download_lines()]
    for lines in sections:
        for line in lines:
            click.echo(line)
        click.echo()
    if out_dir is not None:
        out = _resolve_out(out_dir)
        _write_analytics_files(out)
        click.echo(f"wrote transmitters/download/memory tables and figures to {out}")


# ----------------------------------------------------------------- gen-topology


@main.command("gen-topology")
@click.option("--kind", type=click.Choice([MESH, BTREE, TTREE]), required=True)
@click.option("--nodes", type=int, required=True)
@click.option("--seed", type=int, default=42, show_default=True,
              help="Layout seed (meshes only; trees are deterministic).")
@click.option("--out", "out_path", type=click.Path(dir_okay=False), required=True)
@click.option("--area-side-m", type=float, default=None,
              help="Mesh square side; defaults to density-preserving scaling.")
@click.option("--range-m", type=float, default=200.0, show_default=True)
def gen_topology_cmd(kind: str, nodes: int, seed: int, out_path: str,
                     area_side_m: Optional[float], range_m: float) -> None:
    """Generate a device layout and write it as a plain-text edge list."""
    if nodes < 1:
        raise click.ClickException("nodes: must be at least 1")
    if kind == MESH:
        side = area_side_m if area_side_m is not None else 4000.0 * (nodes / 1024) ** 0.5
        try:
            topo = gen_mesh(nodes, side, range_m, random.Random(seed))
        except ValueError as exc:
            raise click.ClickException(str(exc))
    else:
        topo = gen_tree(nodes, 2 if kind == BTREE else 3)
    parent = Path(out_path).parent
    if str(parent) not in ("", "."):
        parent.mkdir(parents=True, exist_ok=True)
    write_topology(topo, out_path)
    degrees = [len(a) for a in topo.adj]
    click.echo(f"wrote {kind} topology: {topo.n} devices, "
               f"{sum(degrees) // 2} links, mean degree "
               f"{sum(degrees) / topo.n:.2f} -> {out_path}")


if __name__ == "__main__":
    main()
