"""Command-line entry point: effective, solve, verify and birkhoff runs from a JSON config."""

import json
import logging
import sys
from collections.abc import Sequence
from pathlib import Path
from typing import Any

import click
import numpy as np

from rod_homogenization.cell import EffectiveForm, RegimeSpec, effective_form
from rod_homogenization.geometry import CrossSection, MacroStrain, build_section, normalize_section
from rod_homogenization.material import tensor_from_block, tensor_to_block
from rod_homogenization.microstructure import MicrostructureSpec, birkhoff_sweep, realize
from rod_homogenization.rod import LoadSpec, solve_rod
from rod_homogenization.verify import convergence_sweep
from utils.constants import (
    BIRKHOFF_CSV_COLUMNS,
    EXIT_CONFIG_ERROR,
    EXIT_OK,
    EXIT_SOLVER_FAILURE,
    ROD_CSV_COLUMNS,
    SWEEP_CSV_COLUMNS,
)
from utils.linalg import SolverError
from utils.models import ConfigError, RunConfig, load_run_config
from utils.output_helpers import format_csv, format_json

LOGGER = logging.getLogger(__name__)

LOG_LEVELS = ("DEBUG", "INFO", "WARNING", "ERROR")


class FloatListParamType(click.ParamType):
    """Comma-separated list of positive floats, e.g. 0.1,0.05,0.025."""

    name = "float_list"

    def convert(self, value: Any, param: click.Parameter | None, ctx: click.Context | None) -> list[float]:
        if isinstance(value, list):
            return value
        try:
            values = [float(item) for item in str(value).split(",") if item.strip()]
        except ValueError:
            self.fail(f"Invalid float list: '{value}'. Expected format: 0.1,0.05,0.025", param, ctx)
        if not values or any(item <= 0.0 for item in values):
            self.fail(f"Invalid float list: '{value}'. Values must be positive", param, ctx)
        return values


H_LIST_TYPE = FloatListParamType()


# ============================================================================
# Config to Domain Objects
# ============================================================================


def _with_overrides(config: RunConfig, seed: int | None, threads: int | None) -> RunConfig:
    update: dict[str, Any] = {}
    if seed is not None:
        update["seed"] = seed
    if threads is not None:
        update["threads"] = threads
    return config.model_copy(update=update)


def _microstructure(config: RunConfig) -> MicrostructureSpec:
    if config.microstructure is not None:
        return MicrostructureSpec.from_block(block=config.microstructure, seed=config.microstructure_seed)
    if config.material is not None:
        return MicrostructureSpec.homogeneous(tensor=tensor_from_block(block=config.material))
    raise ConfigError("config needs a 'material' or a 'microstructure' block")


def _section(config: RunConfig) -> CrossSection:
    if config.section is None:
        raise ConfigError("config needs a 'section' block")
    block = config.section
    cs = build_section(shape=block.shape, target_h=block.mesh_h, params=block.params)
    return normalize_section(cs=cs) if block.normalize else cs


def _regime(config: RunConfig) -> RegimeSpec:
    if config.regime is None:
        raise ConfigError("config needs a 'regime' block")
    return RegimeSpec.from_block(block=config.regime)


def _effective(config: RunConfig, config_path: Path) -> EffectiveForm:
    block = config.effective
    if block is None:
        raise ConfigError("config needs an 'effective' block")
    if block.path is None:
        return EffectiveForm.from_dict(data={"a0": block.a0, "a0_1": block.a0_1, "rho0": block.rho0})
    path = config_path.parent / block.path
    try:
        data = json.loads(path.read_text(encoding="utf-8"))
    except OSError as exc:
        raise ConfigError(f"Cannot read effective form {path}: {exc.strerror}") from exc
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: line {exc.lineno} column {exc.colno}: {exc.msg}") from exc
    return EffectiveForm.from_dict(data=data)


def _prepare(config_path: str, seed: int | None, threads: int | None, builders: dict[str, Any]) -> dict[str, Any]:
    """Load the config and build every domain object a subcommand needs before any solve starts."""
    config = _with_overrides(config=load_run_config(path=config_path), seed=seed, threads=threads)
    inputs: dict[str, Any] = {"config": config}
    try:
        for name, builder in builders.items():
            inputs[name] = builder(config)
    except ConfigError:
        raise
    except ValueError as exc:
        raise ConfigError(f"{config_path}: {exc}") from exc
    return inputs


def _target(option: str | None, configured: str | None, config_path: str) -> str | None:
    """Command-line paths are taken as given; config paths resolve against the config file directory."""
    if option is not None:
        return option
    if configured is None:
        return None
    return str(Path(config_path).parent / configured)


def _emit(text: str, path: str | None) -> None:
    if path is None:
        click.echo(text, nl=False)
        return
    Path(path).write_text(text, encoding="utf-8")
    LOGGER.info(f"Wrote {path}")


def _emit_summary(payload: dict[str, Any], path: str | None) -> None:
    text = format_json(payload=payload)
    if path is None:
        click.echo(text, nl=False, err=True)
        return
    Path(path).write_text(text, encoding="utf-8")


# ============================================================================
# Commands
# ============================================================================


def common_options(func: Any) -> Any:
    for option in reversed(
        [
            click.option("-c", "--config", "config_path", required=True, help="Path of the JSON run configuration"),
            click.option("-o", "--output", default=None, help="Output file (defaults to the config or stdout)"),
            click.option("--seed", type=click.IntRange(min=0), default=None, help="Override the config seed"),
            click.option("--threads", type=click.IntRange(min=1), default=None, help="Cap on worker threads"),
        ]
    ):
        func = option(func)
    return func


@click.group(help="Homogenized von Kármán rod models from microstructured elasticity")
@click.option(
    "--log-level",
    type=click.Choice(LOG_LEVELS, case_sensitive=False),
    default="WARNING",
    help="Logging verbosity",
)
def cli(log_level: str) -> None:
    logging.basicConfig(level=log_level.upper(), format="%(asctime)s %(levelname)s %(name)s: %(message)s")


@cli.command(help="Solve the unit corrector problems and write the effective form as JSON")
@common_options
def effective(config_path: str, output: str | None, seed: int | None, threads: int | None) -> None:
    inputs = _prepare(
        config_path=config_path,
        seed=seed,
        threads=threads,
        builders={"spec": _microstructure, "cs": _section, "regime": _regime},
    )
    config: RunConfig = inputs["config"]
    micro = realize(spec=inputs["spec"])
    form = effective_form(
        regime=inputs["regime"],
        cs=inputs["cs"],
        micro=micro,
        threads=config.threads,
        method=config.solver.method,
        rtol=config.solver.rtol,
        max_iterations=config.solver.max_iterations,
    )
    payload = {
        **form.to_dict(),
        "regime": inputs["regime"].regime.value,
        "gamma": inputs["regime"].gamma,
        "axial": inputs["regime"].axial_scheme(micro=micro),
        "phases": [tensor_to_block(tensor=tensor).model_dump(by_alias=True) for tensor in inputs["spec"].phases],
        "seed": config.microstructure_seed,
    }
    _emit(
        text=format_json(payload=payload),
        path=_target(option=output, configured=config.outputs.path, config_path=config_path),
    )


@cli.command(help="Solve the homogenized rod equations and write the fields as CSV")
@common_options
def solve(config_path: str, output: str | None, seed: int | None, threads: int | None) -> None:
    path = Path(config_path)
    inputs = _prepare(
        config_path=config_path,
        seed=seed,
        threads=threads,
        builders={
            "form": lambda config: _effective(config=config, config_path=path),
            "load": lambda config: LoadSpec.from_block(block=config.load) if config.load else None,
        },
    )
    config: RunConfig = inputs["config"]
    if inputs["load"] is None:
        raise ConfigError("config needs a 'load' block")
    solution = solve_rod(eff=inputs["form"], load=inputs["load"], bc=config.bc)
    text = format_csv(columns=ROD_CSV_COLUMNS, rows=solution.to_rows(), seed=config.seed)
    _emit(text=text, path=_target(option=output, configured=config.outputs.path, config_path=config_path))


@cli.command(help="Sweep h and compare scaled recovery energies with the homogenized limit")
@common_options
@click.option("--h-list", type=H_LIST_TYPE, default=None, help="Decreasing thicknesses, e.g. 0.1,0.05,0.025")
@click.option("--summary", default=None, help="JSON summary file (defaults to the config or stderr)")
def verify(
    config_path: str,
    output: str | None,
    seed: int | None,
    threads: int | None,
    h_list: list[float] | None,
    summary: str | None,
) -> None:
    inputs = _prepare(
        config_path=config_path,
        seed=seed,
        threads=threads,
        builders={"spec": _microstructure, "cs": _section, "regime": _regime},
    )
    config: RunConfig = inputs["config"]
    h_values = h_list or config.h_list
    if not h_values:
        raise ConfigError("verify needs an h list (--h-list or 'h_list' in the config)")
    block = config.verify
    length = block.length if block else 1.0
    strain = block.macro_strain if block else None
    ms = MacroStrain(rho=strain.rho, kappa=strain.kappa) if strain else MacroStrain(rho=1.0)
    result = convergence_sweep(
        h_list=h_values,
        regime=inputs["regime"],
        cs=inputs["cs"],
        micro=realize(spec=inputs["spec"]),
        ms=ms,
        L=length,
        threads=config.threads,
    )
    _emit(
        text=format_csv(columns=SWEEP_CSV_COLUMNS, rows=result.to_rows(), seed=config.microstructure_seed),
        path=_target(option=output, configured=config.outputs.path, config_path=config_path),
    )
    _emit_summary(
        payload={**result.summary(), "seed": config.microstructure_seed},
        path=_target(option=summary, configured=config.outputs.summary, config_path=config_path),
    )


@cli.command(help="Birkhoff averages of a per-phase quantity over growing windows")
@common_options
@click.option("--summary", default=None, help="JSON summary file (defaults to the config or stderr)")
def birkhoff(config_path: str, output: str | None, seed: int | None, threads: int | None, summary: str | None) -> None:
    inputs = _prepare(config_path=config_path, seed=seed, threads=threads, builders={"spec": _microstructure})
    config: RunConfig = inputs["config"]
    if config.birkhoff is None:
        raise ConfigError("config needs a 'birkhoff' block")
    spec: MicrostructureSpec = inputs["spec"]
    base_seed = spec.seed or 0
    sweep = birkhoff_sweep(
        spec=spec,
        g=config.birkhoff.values,
        windows=config.birkhoff.windows,
        seeds=[base_seed + offset for offset in range(config.birkhoff.seeds)],
    )
    rows = np.array([[row.T, row.average, row.abs_error] for row in sweep.rows])
    _emit(
        text=format_csv(columns=BIRKHOFF_CSV_COLUMNS, rows=rows, seed=base_seed),
        path=_target(option=output, configured=config.outputs.path, config_path=config_path),
    )
    _emit_summary(
        payload={"ensemble_mean": sweep.ensemble_mean, "fitted_rate": sweep.fitted_rate, "seed": base_seed},
        path=_target(option=summary, configured=config.outputs.summary, config_path=config_path),
    )


# ============================================================================
# Entry Points
# ============================================================================


def run(argv: Sequence[str]) -> int:
    """Run one subcommand and map failures to exit codes: 2 for usage/config errors, 1 for solver failures."""
    try:
        cli.main(args=list(argv), prog_name="rod_homogenization", standalone_mode=False)
    except click.exceptions.Exit as exc:
        return exc.exit_code
    except click.UsageError as exc:
        click.echo(f"Error: {exc.format_message()}", err=True)
        return EXIT_CONFIG_ERROR
    except ConfigError as exc:
        click.echo(f"Error: {exc}", err=True)
        return EXIT_CONFIG_ERROR
    except (SolverError, np.linalg.LinAlgError, ValueError) as exc:
        click.echo(f"Error: {exc}", err=True)
        return EXIT_SOLVER_FAILURE
    except click.Abort:
        return EXIT_SOLVER_FAILURE
    return EXIT_OK


def main() -> None:
    raise SystemExit(run(argv=sys.argv[1:]))


if __name__ == "__main__":
    main()
