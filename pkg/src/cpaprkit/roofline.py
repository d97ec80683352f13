"""Roofline model for the accumulation kernels, in exact rational arithmetic.

Work W (FLOPs) and traffic Q (8-byte words) per launch are closed-form in
nnz, the rank R, and (for the chunked kernel) the chunk width V. All
intermediate math uses fractions so that R/V never truncates and the
intensity is provably independent of nnz; floats appear only at the
output boundary.
"""

import json
import os
from dataclasses import dataclass
from fractions import Fraction
from importlib import resources

MACHINE_DIR_ENV = "CPAPRKIT_MACHINES"
WORD_BYTES = 8

# Round-figure intensities conventionally quoted for these kernel families
# (flops/byte). The closed-form W/Q below gives different finite-R values
# (e.g. atomic R=10 -> 42/416 ~ 0.101), so these are annotation only: they
# appear in reports when explicitly requested, never inside calculations.
QUOTED_INTENSITY = {"atomic": Fraction(1, 8), "chunked": Fraction(27, 100)}


def _frac(value, what):
    try:
        if isinstance(value, str):
            result = Fraction(value)
        elif isinstance(value, (int, Fraction)):
            result = Fraction(value)
        elif isinstance(value, float):
            result = Fraction(str(value))
        else:
            raise TypeError
    except (ValueError, ZeroDivisionError, TypeError) as exc:
        raise ValueError(f"{what} must be a positive number, got {value!r}") from exc
    if result <= 0:
        raise ValueError(f"{what} must be positive, got {value!r}")
    return result


@dataclass(frozen=True)
class MachineSpec:
    """Peak-performance inputs for one machine.

    ``ops_per_cycle`` may be a string fraction like "2/3" for accelerators
    whose double-precision rate is not a whole number per core-cycle;
    decimal floats are interpreted exactly as written (2.6 means 26/10).
    """

    name: str
    clock_ghz: object
    cores_per_socket: object
    ops_per_cycle: object
    sockets: object
    bandwidth_gbs: object

    def __post_init__(self):
        for field_name in (
            "clock_ghz",
            "cores_per_socket",
            "ops_per_cycle",
            "sockets",
            "bandwidth_gbs",
        ):
            _frac(getattr(self, field_name), field_name)

    @classmethod
    def from_dict(cls, data):
        try:
            return cls(
                name=str(data["name"]),
                clock_ghz=data["clock_ghz"],
                cores_per_socket=data["cores_per_socket"],
                ops_per_cycle=data["ops_per_cycle"],
                sockets=data["sockets"],
                bandwidth_gbs=data["bandwidth_gbs"],
            )
        except KeyError as exc:
            raise ValueError(f"machine spec missing field {exc.args[0]!r}") from exc

    def to_dict(self):
        return {
            "name": self.name,
            "clock_ghz": self.clock_ghz,
            "cores_per_socket": self.cores_per_socket,
            "ops_per_cycle": self.ops_per_cycle,
            "sockets": self.sockets,
            "bandwidth_gbs": self.bandwidth_gbs,
        }


@dataclass(frozen=True)
class KernelCostModel:
    """Closed-form cost of one Phi launch.

    variant "atomic": per nonzero, an R-wide inner product (2R flops), a
    divide and a clamp, and an R-wide scaled scatter (2R): W = nnz(4R+2),
    reading value + R-wide pi, B, and output rows: Q = nnz(5R+2) words.

    variant "chunked": the register block amortizes the flush to R/V ops
    and words per nonzero but adds the sorted-order bookkeeping:
    W = nnz(4R + R/V + 3), Q = nnz(6R + 2R/V + 3) words.
    """

    variant: str
    rank: int
    chunk: int = None
    word_bytes: int = WORD_BYTES

    def __post_init__(self):
        if self.variant not in ("atomic", "chunked"):
            raise ValueError(f"unknown cost-model variant {self.variant!r}")
        if self.rank < 1:
            raise ValueError("rank must be >= 1")
        if self.variant == "chunked":
            if self.chunk is None or self.chunk < 1:
                raise ValueError("chunked cost model needs chunk >= 1")
        elif self.chunk is not None:
            raise ValueError("chunk applies only to the chunked variant")

    def label(self):
        if self.variant == "chunked":
            return f"chunked_R{self.rank}_V{self.chunk}"
        return f"atomic_R{self.rank}"


def work_and_traffic(model, nnz):
    """Exact (W flops, Q words) for ``nnz`` nonzeros."""
    if nnz < 0:
        raise ValueError("nnz must be >= 0")
    n = Fraction(nnz)
    R = Fraction(model.rank)
    if model.variant == "atomic":
        return n * (4 * R + 2), n * (5 * R + 2)
    V = Fraction(model.chunk)
    return n * (4 * R + R / V + 3), n * (6 * R + 2 * R / V + 3)


def operational_intensity(model, nnz=1):
    """Exact flops per byte, W / (Q * word_bytes); independent of nnz."""
    if nnz <= 0:
        raise ValueError("nnz must be positive")
    work, traffic = work_and_traffic(model, nnz)
    if traffic == 0:
        raise ValueError("zero traffic")
    return work / (traffic * model.word_bytes)


def quoted_intensity(model):
    """The conventional round-figure intensity for the model's variant."""
    return QUOTED_INTENSITY[model.variant]


def peak_flops(machine):
    """Exact peak GFLOP/s: clock x cores x ops/cycle x sockets."""
    return (
        _frac(machine.clock_ghz, "clock_ghz")
        * _frac(machine.cores_per_socket, "cores_per_socket")
        * _frac(machine.ops_per_cycle, "ops_per_cycle")
        * _frac(machine.sockets, "sockets")
    )


def attainable(machine, intensity):
    """Roofline bound min(peak, bandwidth x intensity), exact."""
    if intensity < 0:
        raise ValueError("intensity must be >= 0")
    if not isinstance(intensity, (int, Fraction)):
        intensity = Fraction(str(intensity))
    bound = _frac(machine.bandwidth_gbs, "bandwidth_gbs") * intensity
    return min(peak_flops(machine), bound)


def balance_point(machine):
    """Intensity where the bandwidth slope meets the compute plateau."""
    return peak_flops(machine) / _frac(machine.bandwidth_gbs, "bandwidth_gbs")


def emit_roofline(machine, models, stream, quoted=False, points_per_octave=4):
    """Write the P(I) curve plus one marker row per cost model as CSV.

    Samples I geometrically over [2^-7, 2^7]. With ``quoted`` set, each
    model also gets a row at its variant's conventional round-figure
    intensity, labeled *_quoted, for plot annotation.
    """
    stream.write("row,label,intensity_flops_per_byte,gflops\n")
    lo, hi = -7, 7
    steps = (hi - lo) * points_per_octave
    for k in range(steps + 1):
        exponent = lo + k / points_per_octave
        intensity = float(2.0**exponent)
        p = attainable(machine, Fraction(str(intensity)))
        stream.write(f"curve,roofline,{intensity:.10g},{float(p):.10g}\n")
    for model in models:
        inten = operational_intensity(model)
        p = attainable(machine, inten)
        stream.write(
            f"marker,{model.label()},{float(inten):.10g},{float(p):.10g}\n"
        )
        if quoted:
            qi = quoted_intensity(model)
            qp = attainable(machine, qi)
            stream.write(
                f"marker,{model.label()}_quoted,{float(qi):.10g},{float(qp):.10g}\n"
            )
    bp = balance_point(machine)
    stream.write(
        f"balance,{machine.name},{float(bp):.10g},{float(peak_flops(machine)):.10g}\n"
    )


def gnuplot_script(csv_path, machine_name):
    """Companion gnuplot script for a roofline CSV."""
    return f"""set datafile separator ','
set logscale xy
set xlabel 'operational intensity (flops/byte)'
set ylabel 'attainable GFLOP/s'
set title 'roofline: {machine_name}'
plot '<grep ^curve {csv_path}' using 3:4 with lines title 'roofline', \\
     '<grep ^marker {csv_path}' using 3:4 with points pt 7 title 'kernels'
"""


def _machine_dirs():
    dirs = []
    env = os.environ.get(MACHINE_DIR_ENV)
    if env:
        dirs.append(env)
    return dirs


def load_machine(name_or_path):
    """Load a machine spec by file path or by shipped/installed name.

    Bare names (with or without ``.json``) are looked up first in the
    directory named by the CPAPRKIT_MACHINES environment variable, then in
    the machine files shipped with the package.
    """
    if os.path.sep in name_or_path or os.path.isfile(name_or_path):
        with open(name_or_path, "r", encoding="utf-8") as handle:
            return MachineSpec.from_dict(json.load(handle))
    base = name_or_path[:-5] if name_or_path.endswith(".json") else name_or_path
    for directory in _machine_dirs():
        candidate = os.path.join(directory, base + ".json")
        if os.path.isfile(candidate):
            with open(candidate, "r", encoding="utf-8") as handle:
                return MachineSpec.from_dict(json.load(handle))
    package_files = resources.files("cpaprkit") / "machines"
    candidate = package_files / (base + ".json")
    if candidate.is_file():
        return MachineSpec.from_dict(json.loads(candidate.read_text()))
    raise FileNotFoundError(
        f"no machine spec named {name_or_path!r}; known: {', '.join(list_machines())}"
    )


def list_machines():
    """Names of all machine specs visible to load_machine."""
    names = set()
    for directory in _machine_dirs():
        if os.path.isdir(directory):
            for fname in os.listdir(directory):
                if fname.endswith(".json"):
                    names.add(fname[:-5])
    package_files = resources.files("cpaprkit") / "machines"
    for entry in package_files.iterdir():
        if entry.name.endswith(".json"):
            names.add(entry.name[:-5])
    return sorted(names)
