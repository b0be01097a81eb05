"""
Run configuration

Turns command-line flags (or a manifest's config echo) into a validated
RunConfig. Every default is written into the config so a manifest replays
the run without consulting the defaults of a later version.
"""
from enum import Enum
from pathlib import Path
from typing import Any, Dict, Optional, Sequence, Tuple
import argparse
import logging
import math

from pydantic import BaseModel, ConfigDict, Field, ValidationError, field_validator, model_validator

from config import settings
from errors import UsageError
from harness.verdicts import SUITES
from models import EstimatorMethod, RenewalSide
from montecarlo.streams import fresh_seed
from randwalk.renewal import RenewalMethod
from reporting.manifest import RunManifest

logger = logging.getLogger(__name__)


class Command(str, Enum):
    """CLI subcommands"""
    solve_beta = "solve-beta"
    renewal = "renewal"
    estimate_survival = "estimate-survival"
    oracle = "oracle"
    verify = "verify"
    conditional_law = "conditional-law"
    flatness = "flatness"


class OutputFormat(str, Enum):
    json = "json"
    csv = "csv"


class OracleQuantity(str, Enum):
    survival = "survival"
    ratio = "ratio"
    prob_min_nonneg = "prob-min-nonneg"
    conditional_pmf = "conditional-pmf"
    renewal_u = "renewal-u"
    renewal_v = "renewal-v"


# commands whose CSV output is more than one table
MULTI_TABLE_COMMANDS = {Command.verify, Command.conditional_law}
# commands with nothing tabular to write as CSV
SCALAR_COMMANDS = {Command.solve_beta, Command.oracle}


class RunConfig(BaseModel):
    """Validated configuration of one CLI run"""
    model_config = ConfigDict(frozen=True, extra="forbid")

    command: Command
    env: str = Field(description="environment JSON file")
    seed: int = Field(ge=0, lt=2 ** 64)
    workers: int = Field(default=1, ge=1)
    reps: int = Field(default=10_000, ge=1)
    block_size: int = Field(default=settings.BLOCK_SIZE, ge=1)
    out: str = Field(default="-", description="file, directory (csv) or - for stdout")
    format: OutputFormat = OutputFormat.json
    manifest: Optional[str] = None

    # estimate-survival / conditional-law / flatness / oracle
    n: int = Field(default=8, ge=0)
    survival_n: Optional[int] = Field(default=None, ge=0, description="single-n estimate-survival (flat Estimate output)")
    ns: Tuple[int, ...] = (20, 40, 80, 160)
    method: EstimatorMethod = EstimatorMethod.tilted_is
    theta: Optional[float] = Field(default=None, gt=0.0)
    r_exponent: float = Field(default=0.25, gt=0.0, lt=1.0)

    # renewal / oracle
    side: RenewalSide = RenewalSide.u
    renewal_method: RenewalMethod = Field(default=RenewalMethod.series, description="ladder by default for verify")
    K: int = Field(default=settings.RENEWAL_K, ge=1)
    xmax: float = Field(default=10.0, gt=0.0)
    step: Optional[float] = Field(default=None, gt=0.0)
    x: float = 0.0
    quantity: OracleQuantity = OracleQuantity.survival

    # verify
    suites: Tuple[str, ...] = ("all",)
    xs: Tuple[float, ...] = (0.0, 2.0)
    stabilization_threshold: float = Field(default=settings.STABILIZATION_THRESHOLD, gt=0.0)
    scaling_threshold: float = Field(default=settings.SCALING_THRESHOLD, gt=0.0)

    @model_validator(mode="before")
    @classmethod
    def _command_defaults(cls, data: Any) -> Any:
        if isinstance(data, dict) and data.get("command") == Command.verify.value and "renewal_method" not in data:
            data = {**data, "renewal_method": RenewalMethod.ladder.value}
        return data

    @field_validator("ns")
    @classmethod
    def _increasing(cls, v: Tuple[int, ...]) -> Tuple[int, ...]:
        if not v or any(n < 1 for n in v) or any(b <= a for a, b in zip(v, v[1:])):
            raise ValueError(f"n-list must be positive and strictly increasing, got {list(v)}")
        return v

    @field_validator("suites")
    @classmethod
    def _known_suites(cls, v: Tuple[str, ...]) -> Tuple[str, ...]:
        unknown = [s for s in v if s not in SUITES and s != "all"]
        if unknown:
            raise ValueError(f"unknown suite(s) {unknown}; choose from {', '.join(SUITES)} or all")
        return v

    @model_validator(mode="after")
    def _output_rules(self) -> "RunConfig":
        if self.format == OutputFormat.csv:
            if self.command in SCALAR_COMMANDS:
                raise ValueError(f"{self.command.value} has no tabular output; use --format json")
            if self.command in MULTI_TABLE_COMMANDS and self.out == "-":
                raise ValueError(f"{self.command.value} writes several CSV tables; --out must name a directory")
        return self

    @property
    def multi_table(self) -> bool:
        return self.format == OutputFormat.csv and self.command in MULTI_TABLE_COMMANDS

    def manifest_path(self) -> Path:
        """Explicit --manifest, else next to the output (cwd for stdout)"""
        if self.manifest:
            return Path(self.manifest)
        if self.out == "-":
            return Path("bpre-manifest.json")
        out = Path(self.out)
        if self.multi_table:
            return out / "manifest.json"
        return out.with_name(out.name + ".manifest.json")

    def echo(self) -> Dict[str, Any]:
        """Config echo for the manifest, defaults included"""
        return self.model_dump(mode="json")


# =============================================================================
# ARGUMENT PARSING
# =============================================================================

def sci_int(text: str) -> int:
    """Integer flag that also accepts scientific notation (1e6, 2.5e3)"""
    try:
        return int(text)
    except ValueError:
        pass
    try:
        value = float(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"not an integer: {text!r}")
    if not math.isfinite(value) or not value.is_integer():
        raise argparse.ArgumentTypeError(f"not an integer: {text!r}")
    return int(value)


def _int_list(text: str) -> Tuple[int, ...]:
    return tuple(sci_int(t) for t in text.split(",") if t.strip())


def _float_list(text: str) -> Tuple[float, ...]:
    try:
        return tuple(float(t) for t in text.split(",") if t.strip())
    except ValueError:
        raise argparse.ArgumentTypeError(f"not a comma-separated float list: {text!r}")


def _suite_list(text: str) -> Tuple[str, ...]:
    return tuple(t.strip() for t in text.split(",") if t.strip())


def _common_flags() -> argparse.ArgumentParser:
    """Global flags, accepted before or after the subcommand"""
    common = argparse.ArgumentParser(add_help=False, argument_default=argparse.SUPPRESS)
    common.add_argument("--env", help="environment JSON file")
    common.add_argument("--seed", type=sci_int, help="root seed (random and recorded when omitted)")
    common.add_argument("--workers", type=sci_int, help="worker processes")
    common.add_argument("--reps", type=sci_int, help="Monte Carlo replicas (1e6 accepted)")
    common.add_argument("--block-size", dest="block_size", type=sci_int, help="replicas per rng block")
    common.add_argument("--out", help="output file, directory for multi-table CSV, or - (default)")
    common.add_argument("--format", choices=[f.value for f in OutputFormat], help="output format (default csv for a .csv --out, else json)")
    common.add_argument("--manifest", help="manifest path (default next to --out)")
    common.add_argument("--from-manifest", dest="from_manifest", help="replay the run recorded in a manifest")
    return common


def build_parser() -> argparse.ArgumentParser:
    common = _common_flags()
    parser = argparse.ArgumentParser(
        prog="bpre",
        description="Weakly subcritical branching processes in random environment: estimators, exact oracles and limit checks",
        parents=[common],
    )
    sub = parser.add_subparsers(dest="command")

    def command(name: Command, help: str) -> argparse.ArgumentParser:
        return sub.add_parser(name.value, help=help, parents=[common], argument_default=argparse.SUPPRESS)

    command(Command.solve_beta, "tilt parameter beta, gamma and the tilted law")

    renewal = command(Command.renewal, "renewal function table u or v")
    renewal.add_argument("--side", choices=[s.value for s in RenewalSide])
    renewal.add_argument("--method", dest="renewal_method", choices=[m.value for m in RenewalMethod])
    renewal.add_argument("--K", type=sci_int, help="ladder epochs (series method)")
    renewal.add_argument("--xmax", type=float)
    renewal.add_argument("--step", type=float, help="grid step (span-aligned on lattices)")

    survival = command(Command.estimate_survival, "P{Z_n > 0} along an n-list")
    survival.add_argument("--n", dest="survival_n", type=sci_int, help="single n: one flat estimate")
    survival.add_argument("--n-list", dest="ns", type=_int_list, help="table over an increasing n-list")
    survival.add_argument("--method", choices=[m.value for m in EstimatorMethod if m != EstimatorMethod.mc])

    oracle = command(Command.oracle, "exact enumeration of one quantity")
    oracle.add_argument("--quantity", choices=[q.value for q in OracleQuantity])
    oracle.add_argument("--n", type=sci_int)
    oracle.add_argument("--x", type=float)
    oracle.add_argument("--K", type=sci_int)

    verify = command(Command.verify, "run verification suites")
    verify.add_argument("--suite", dest="suites", type=_suite_list, help=f"comma list of {', '.join(SUITES)} or all")
    verify.add_argument("--theta", type=float, help="exponential damping of the walk limits (default 1)")
    verify.add_argument("--x-grid", dest="xs", type=_float_list)
    verify.add_argument("--r-exponent", dest="r_exponent", type=float)
    verify.add_argument("--renewal-method", dest="renewal_method", choices=[m.value for m in RenewalMethod])
    verify.add_argument("--K", type=sci_int)
    verify.add_argument("--stabilization-threshold", dest="stabilization_threshold", type=float)
    verify.add_argument("--scaling-threshold", dest="scaling_threshold", type=float)

    law = command(Command.conditional_law, "weighted law of Z_n given survival")
    law.add_argument("--n-list", dest="ns", type=_int_list)
    law.add_argument("--theta", type=float, help="moment order in (0, beta)")

    flat = command(Command.flatness, "flatness of e^{-S_k} Z_k on survival paths")
    flat.add_argument("--n-list", dest="ns", type=_int_list)
    flat.add_argument("--r-exponent", dest="r_exponent", type=float)

    return parser


def _field_errors(e: ValidationError) -> str:
    return "; ".join(f"{'.'.join(str(p) for p in err['loc']) or 'config'}: {err['msg']}" for err in e.errors())


def parse_config(argv: Optional[Sequence[str]] = None, manifest: Optional[Dict[str, Any]] = None) -> RunConfig:
    """
    Validated RunConfig from CLI flags, or from a manifest's config echo.

    Raises:
        UsageError: missing or invalid flags, with field-level messages
    """
    args = build_parser().parse_args(argv)
    given = vars(args)
    if given.get("from_manifest") and manifest is None:
        manifest = RunManifest.load(given["from_manifest"]).config

    if manifest is not None:
        data = dict(manifest)
        # output location may move on replay; everything numeric stays
        for key in ("out", "manifest", "format"):
            if key in given:
                data[key] = given[key]
    else:
        if given.get("command") is None:
            raise UsageError("a subcommand is required (or --from-manifest)")
        if not given.get("env"):
            raise UsageError("--env is required")
        if "survival_n" in given and "ns" in given:
            raise UsageError("--n and --n-list are mutually exclusive")
        data = {k: v for k, v in given.items() if v is not None and k != "from_manifest"}
        if "format" not in data and Path(data.get("out", "-")).suffix.lower() == ".csv":
            data["format"] = OutputFormat.csv.value
        if "seed" not in data:
            data["seed"] = fresh_seed()
            logger.info(f"No --seed given, using {data['seed']}")

    if data.get("env") and not Path(data["env"]).is_file():
        raise UsageError(f"environment file not found: {data['env']}")
    try:
        return RunConfig.model_validate(data)
    except ValidationError as e:
        raise UsageError(_field_errors(e)) from e
