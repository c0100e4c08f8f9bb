"""Regenerate reference results for the shipped configs and summarize them against closed forms."""

import argparse
import json
import logging
import math
import sys
from datetime import UTC, datetime
from pathlib import Path

import numpy as np

from rod_homogenization.cli import run
from rod_homogenization.material import young_modulus
from utils.constants import EXIT_OK

LOGGER = logging.getLogger("generate_reference_results")

CONFIG_DIR = Path(__file__).resolve().parents[1] / "configs"

# config stem -> (subcommand, main output suffix, writes a summary)
RUNS: dict[str, tuple[str, str, bool]] = {
    "homog_disk": ("effective", "effective.json", False),
    "cantilever": ("solve", "rod.csv", False),
    "laminate_gamma1": ("verify", "sweep.csv", True),
    "renewal_birkhoff": ("birkhoff", "birkhoff.csv", True),
}


def run_config(stem: str, output_dir: Path, threads: int | None) -> tuple[Path, Path | None]:
    """Run one shipped config through the CLI; returns the output and summary paths."""
    command, suffix, has_summary = RUNS[stem]
    output = output_dir / f"{stem}.{suffix}"
    argv = [command, "-c", str(CONFIG_DIR / f"{stem}.json"), "-o", str(output)]
    summary = output_dir / f"{stem}.summary.json" if has_summary else None
    if summary is not None:
        argv += ["--summary", str(summary)]
    if threads is not None:
        argv += ["--threads", str(threads)]
    code = run(argv=argv)
    if code != EXIT_OK:
        raise RuntimeError(f"{command} on {stem}.json exited with {code}")
    return output, summary


def _read_csv(path: Path) -> np.ndarray:
    return np.loadtxt(path, delimiter=",", skiprows=2, ndmin=2)


def _format_summary_md(generated_at: str, results: dict[str, tuple[Path, Path | None]]) -> str:
    """Markdown table of each run's headline value next to its closed-form or expected value."""
    lines = ["# Reference Results", "", f"Generated: {generated_at}", "", "| Run | Quantity | Value | Expected |"]
    lines.append("|-----|----------|-------|----------|")

    if "homog_disk" in results:
        a0 = np.array(json.loads(results["homog_disk"][0].read_text(encoding="utf-8"))["a0"])
        young = young_modulus(lame_lambda=1.0, lame_mu=1.0)
        lines.append(f"| homog_disk | a0[rho,rho] | {a0[0, 0]:.6g} | {young:.6g} |")
        lines.append(f"| homog_disk | a0[k1,k1] | {a0[1, 1]:.6g} | {1.0 / (2.0 * math.pi):.6g} |")
        lines.append(f"| homog_disk | a0[k2,k2] | {a0[2, 2]:.6g} | {young / (4.0 * math.pi):.6g} |")
        lines.append(f"| homog_disk | a0[k3,k3] | {a0[3, 3]:.6g} | {young / (4.0 * math.pi):.6g} |")

    if "cantilever" in results:
        rows = _read_csv(results["cantilever"][0])
        lines.append(f"| cantilever | v2(L) | {rows[-1, 2]:.10g} | 0.125 |")
        lines.append(f"| cantilever | u(L) | {rows[-1, 1]:.10g} | {-1.0 / 112.0:.10g} |")

    for stem, key, expected in (("laminate_gamma1", "limit_value", "exact rows"), ("renewal_birkhoff", "fitted_rate", "-0.5")):
        if stem in results and results[stem][1] is not None:
            summary = json.loads(results[stem][1].read_text(encoding="utf-8"))
            lines.append(f"| {stem} | {key} | {summary[key]} | {expected} |")

    return "\n".join(lines)


def main() -> None:
    parser = argparse.ArgumentParser(description="Regenerate reference results from the shipped configs")
    parser.add_argument(
        "--output-dir",
        type=Path,
        default=Path("reference_results"),
        help="Output directory (default: reference_results/)",
    )
    parser.add_argument(
        "--runs", type=str, default=None, help=f"Comma-separated subset of runs (default: {','.join(RUNS)})"
    )
    parser.add_argument("--threads", type=int, default=None, help="Cap on worker threads per run")
    args = parser.parse_args()

    logging.basicConfig(level=logging.INFO, format="%(asctime)s [%(name)s] %(message)s", datefmt="%H:%M:%S")

    stems = list(RUNS)
    if args.runs:
        stems = [stem.strip() for stem in args.runs.split(",")]
        invalid = [stem for stem in stems if stem not in RUNS]
        if invalid:
            parser.error(f"Unknown runs: {', '.join(invalid)}. Valid: {', '.join(RUNS)}")

    args.output_dir.mkdir(parents=True, exist_ok=True)
    results: dict[str, tuple[Path, Path | None]] = {}
    errors: list[dict[str, str]] = []
    for index, stem in enumerate(stems, 1):
        LOGGER.info("[%d/%d] %s", index, len(stems), stem)
        try:
            results[stem] = run_config(stem=stem, output_dir=args.output_dir, threads=args.threads)
        except RuntimeError as exc:
            LOGGER.warning("[%d/%d] %s: %s", index, len(stems), stem, exc)
            errors.append({"run": stem, "error": str(exc)})

    generated_at = datetime.now(UTC).strftime("%Y-%m-%d %H:%M UTC")
    summary_path = args.output_dir / "reference-results.md"
    summary_path.write_text(_format_summary_md(generated_at=generated_at, results=results) + "\n", encoding="utf-8")
    LOGGER.info("Written to %s: %d runs, %d errors", args.output_dir, len(results), len(errors))
    if errors:
        sys.exit(1)


if __name__ == "__main__":
    main()
