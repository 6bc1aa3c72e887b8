"""Tight-binding models in reciprocal space.

A model is a Bravais lattice (rows of ``lattice_vectors`` are the primitive
vectors a_i), a list of orbitals with on-site energies eps_j, and a list of
hopping terms t_jl between orbital j in the home cell and orbital l in the
cell displaced by integer coordinates R.  Each physical hopping is stored
once; the Hermitian partner (l, j, -R, conj t) is implied and must not appear
in the document.

Phase convention: the Bloch matrix is

    H_jl(k) = sum_R t_jl(R) exp(+i k . R_cart),   H_jj(k) = eps_j + ...

with R_cart = sum_i R_i a_i, i.e. cell displacements only, no orbital-position
phases.  This keeps H exactly periodic under reciprocal lattice translations,
H(k + G) = H(k).  Spectra are invariant under the alternative atom-position
gauge.

Model documents are TOML; see ``parse_model`` for the schema.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

try:
    import tomllib
except ModuleNotFoundError:  # Python 3.10
    import tomli as tomllib

from .errors import ModelParseError, ModelValidationError

__all__ = [
    "Orbital",
    "HoppingTerm",
    "TightBindingModel",
    "KVector",
    "BlochMatrix",
    "ModelDocument",
    "parse_model",
    "load_document",
    "load_document_file",
    "reciprocal_vectors",
    "bloch_matrix",
    "exact_bands",
    "kpath",
]

# Relative tolerance used when checking Hermiticity of externally supplied
# matrices before diagonalization.
_HERMITICITY_TOL = 1e-9


@dataclass(frozen=True)
class Orbital:
    """One orbital of the unit cell: a label and its on-site energy in eV."""

    label: str
    onsite: float


@dataclass(frozen=True)
class HoppingTerm:
    """Hopping amplitude t_jl from orbital ``src`` (home cell) to orbital
    ``dst`` in the cell displaced by the integer vector ``displacement``.

    The reverse process is implied by Hermiticity and never stored.
    """

    src: int
    dst: int
    displacement: tuple[int, ...]
    amplitude: complex


@dataclass(frozen=True)
class TightBindingModel:
    """Validated tight-binding model.

    ``lattice_vectors`` has shape (dim, dim), rows are the primitive vectors.
    Arrays held by this class are treated as immutable.
    """

    lattice_vectors: np.ndarray
    orbitals: tuple[Orbital, ...]
    hoppings: tuple[HoppingTerm, ...]

    @property
    def dimension(self) -> int:
        return self.lattice_vectors.shape[0]

    @property
    def n_orbitals(self) -> int:
        return len(self.orbitals)

    @property
    def onsite_energies(self) -> np.ndarray:
        return np.array([o.onsite for o in self.orbitals], dtype=float)


@dataclass(frozen=True)
class KVector:
    """A reciprocal-space point: Cartesian components plus the cumulative
    distance along the path it belongs to (both in Cartesian measure)."""

    components: np.ndarray
    path_distance: float
    label: str | None = None


@dataclass(frozen=True)
class BlochMatrix:
    """The N x N Bloch Hamiltonian at one k-point.

    Invariants (enforced at construction): Hermitian to 1e-12 and real
    diagonal.  For models without same-orbital hoppings the diagonal equals
    the on-site energies; with them it carries the same-orbital dispersion,
    and ``onsite`` below is the effective per-k on-site vector either way.
    """

    k: KVector
    matrix: np.ndarray

    def __post_init__(self) -> None:
        m = self.matrix
        if m.ndim != 2 or m.shape[0] != m.shape[1]:
            raise ModelValidationError("Bloch matrix must be square")
        if not np.allclose(m, m.conj().T, atol=1e-12, rtol=0.0):
            raise ModelValidationError("Bloch matrix is not Hermitian")
        if np.abs(m.diagonal().imag).max(initial=0.0) > 1e-12:
            raise ModelValidationError("Bloch matrix diagonal is not real")

    @property
    def n_orbitals(self) -> int:
        return self.matrix.shape[0]

    @property
    def onsite(self) -> np.ndarray:
        """Real diagonal: the effective on-site energies at this k."""
        return self.matrix.diagonal().real.copy()


@dataclass(frozen=True)
class ModelDocument:
    """A parsed model file: the model itself plus path and run metadata."""

    model: TightBindingModel
    kpath_points: tuple[tuple[str, np.ndarray], ...]
    points_per_segment: int
    run_defaults: dict


def _fail(msg: str) -> None:
    raise ModelParseError(msg)


def _as_float(value, where: str) -> float:
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        _fail(f"{where}: expected a number, got {value!r}")
    return float(value)


def _as_complex(value, where: str) -> complex:
    """Amplitudes are written as a bare real number or a [re, im] pair."""
    if isinstance(value, (int, float)) and not isinstance(value, bool):
        return complex(value)
    if isinstance(value, list) and len(value) == 2:
        return complex(_as_float(value[0], where), _as_float(value[1], where))
    _fail(f"{where}: expected a number or [re, im] pair, got {value!r}")


def _check_keys(table: dict, allowed: set[str], where: str) -> None:
    unknown = set(table) - allowed
    if unknown:
        _fail(f"{where}: unknown key(s) {sorted(unknown)}")


_RUN_KEYS = {
    "shots",
    "seed",
    "levels",
    "restarts",
    "max_iterations",
    "warm_start",
    "points_per_segment",
    "beta",
}


def load_document(text: str) -> ModelDocument:
    """Parse a TOML model document.

    Schema::

        [lattice]
        vectors = [[...], ...]          # dim x dim, rows = primitive vectors

        [[orbitals]]
        label = "d"
        onsite = 0.0                    # eV

        [[hoppings]]
        from = 0                        # source orbital index
        to = 1                          # destination orbital index
        displacement = [0, 0]           # integer cell coordinates
        amplitude = [1.3, 0.0]          # eV; bare float also accepted

        [kpath]
        points_per_segment = 30
        coordinates = "reduced"         # or "cartesian"

        [[kpath.points]]
        label = "G"
        coords = [0.0, 0.0]

        [run]                           # optional CLI defaults, ignored here
        shots = 20000

    Unknown keys are rejected.  The Hermitian partner of each hopping is
    implied; storing both members of a pair is an error.
    """
    try:
        doc = tomllib.loads(text)
    except tomllib.TOMLDecodeError as exc:
        raise ModelParseError(f"invalid TOML: {exc}") from exc

    _check_keys(doc, {"lattice", "orbitals", "hoppings", "kpath", "run"}, "document")

    lattice = doc.get("lattice")
    if not isinstance(lattice, dict):
        _fail("missing [lattice] table")
    _check_keys(lattice, {"vectors"}, "[lattice]")
    vectors = lattice.get("vectors")
    if not isinstance(vectors, list) or not vectors:
        _fail("[lattice].vectors must be a non-empty list of rows")
    try:
        A = np.array(vectors, dtype=float)
    except (TypeError, ValueError):
        _fail("[lattice].vectors must be numeric")
    if A.ndim != 2 or A.shape[0] != A.shape[1]:
        _fail(f"[lattice].vectors must be square, got shape {A.shape}")
    if abs(np.linalg.det(A)) < 1e-12:
        raise ModelValidationError("lattice vectors are linearly dependent")

    raw_orbitals = doc.get("orbitals")
    if not isinstance(raw_orbitals, list) or len(raw_orbitals) < 2:
        _fail("at least two [[orbitals]] entries are required")
    orbitals = []
    for i, entry in enumerate(raw_orbitals):
        where = f"[[orbitals]] #{i}"
        if not isinstance(entry, dict):
            _fail(f"{where}: expected a table")
        _check_keys(entry, {"label", "onsite"}, where)
        label = entry.get("label")
        if not isinstance(label, str) or not label:
            _fail(f"{where}: label must be a non-empty string")
        orbitals.append(Orbital(label, _as_float(entry.get("onsite", 0.0), where)))
    labels = [o.label for o in orbitals]
    if len(set(labels)) != len(labels):
        raise ModelValidationError("orbital labels must be unique")

    n = len(orbitals)
    dim = A.shape[0]
    raw_hoppings = doc.get("hoppings", [])
    if not isinstance(raw_hoppings, list):
        _fail("[[hoppings]] must be an array of tables")
    hoppings = []
    seen: set[tuple[int, int, tuple[int, ...]]] = set()
    for i, entry in enumerate(raw_hoppings):
        where = f"[[hoppings]] #{i}"
        if not isinstance(entry, dict):
            _fail(f"{where}: expected a table")
        _check_keys(entry, {"from", "to", "displacement", "amplitude"}, where)
        try:
            src = int(entry["from"])
            dst = int(entry["to"])
        except (KeyError, TypeError, ValueError):
            _fail(f"{where}: 'from' and 'to' must be integer orbital indices")
        if not (0 <= src < n and 0 <= dst < n):
            raise ModelValidationError(
                f"{where}: orbital index out of range for {n} orbitals"
            )
        disp = entry.get("displacement")
        if (
            not isinstance(disp, list)
            or len(disp) != dim
            or any(isinstance(x, bool) or not isinstance(x, int) for x in disp)
        ):
            _fail(f"{where}: displacement must be a list of {dim} integers")
        R = tuple(disp)
        if src == dst and all(x == 0 for x in R):
            raise ModelValidationError(
                f"{where}: same-orbital hopping needs a nonzero displacement "
                "(on-site energies belong in [[orbitals]])"
            )
        amp = _as_complex(entry.get("amplitude"), where)
        if amp == 0:
            raise ModelValidationError(f"{where}: zero amplitude")
        key = (src, dst, R)
        partner = (dst, src, tuple(-x for x in R))
        if key in seen:
            raise ModelValidationError(f"{where}: duplicate hopping {key}")
        if partner in seen:
            raise ModelValidationError(
                f"{where}: {key} is the Hermitian partner of an earlier term; "
                "each hopping is stored once"
            )
        seen.add(key)
        hoppings.append(HoppingTerm(src, dst, R, amp))

    A.setflags(write=False)
    model = TightBindingModel(A, tuple(orbitals), tuple(hoppings))

    kpath_points: tuple[tuple[str, np.ndarray], ...] = ()
    pps = 30
    if "kpath" in doc:
        ktable = doc["kpath"]
        if not isinstance(ktable, dict):
            _fail("[kpath] must be a table")
        _check_keys(ktable, {"points", "points_per_segment", "coordinates"}, "[kpath]")
        pps = ktable.get("points_per_segment", 30)
        if isinstance(pps, bool) or not isinstance(pps, int) or pps < 2:
            _fail("[kpath].points_per_segment must be an integer >= 2")
        coords_kind = ktable.get("coordinates", "reduced")
        if coords_kind not in ("reduced", "cartesian"):
            _fail("[kpath].coordinates must be 'reduced' or 'cartesian'")
        raw_points = ktable.get("points")
        if not isinstance(raw_points, list) or len(raw_points) < 2:
            _fail("[kpath] needs at least two [[kpath.points]] entries")
        B = reciprocal_vectors(A)
        pts = []
        for i, entry in enumerate(raw_points):
            where = f"[[kpath.points]] #{i}"
            if not isinstance(entry, dict):
                _fail(f"{where}: expected a table")
            _check_keys(entry, {"label", "coords"}, where)
            label = entry.get("label")
            if not isinstance(label, str) or not label:
                _fail(f"{where}: label must be a non-empty string")
            coords = entry.get("coords")
            if not isinstance(coords, list) or len(coords) != dim:
                _fail(f"{where}: coords must be a list of {dim} numbers")
            vec = np.array([_as_float(c, where) for c in coords], dtype=float)
            if coords_kind == "reduced":
                vec = vec @ B
            vec.setflags(write=False)
            pts.append((label, vec))
        kpath_points = tuple(pts)

    run_defaults = {}
    if "run" in doc:
        rtable = doc["run"]
        if not isinstance(rtable, dict):
            _fail("[run] must be a table")
        _check_keys(rtable, _RUN_KEYS, "[run]")
        run_defaults = dict(rtable)

    return ModelDocument(model, kpath_points, pps, run_defaults)


def parse_model(text: str) -> TightBindingModel:
    """Parse a model document and return just the validated model."""
    return load_document(text).model


def load_document_file(path) -> ModelDocument:
    try:
        with open(path, "r", encoding="utf-8") as fh:
            text = fh.read()
    except OSError as exc:
        raise ModelParseError(f"cannot read model file {path}: {exc}") from exc
    return load_document(text)


def reciprocal_vectors(lattice_vectors: np.ndarray) -> np.ndarray:
    """Rows b_i with a_i . b_j = 2 pi delta_ij."""
    return 2.0 * math.pi * np.linalg.inv(np.asarray(lattice_vectors, float)).T


def bloch_matrix(model: TightBindingModel, k: KVector | np.ndarray) -> BlochMatrix:
    """Assemble H(k) from the stored hoppings and their implied partners."""
    if not isinstance(k, KVector):
        comp = np.asarray(k, dtype=float)
        k = KVector(comp, 0.0)
    if k.components.shape != (model.dimension,):
        raise ModelValidationError(
            f"k has {k.components.shape[0] if k.components.ndim else 0} components, "
            f"model is {model.dimension}-dimensional"
        )
    n = model.n_orbitals
    H = np.zeros((n, n), dtype=complex)
    A = model.lattice_vectors
    for term in model.hoppings:
        r_cart = np.asarray(term.displacement, dtype=float) @ A
        contrib = term.amplitude * np.exp(1j * float(k.components @ r_cart))
        H[term.src, term.dst] += contrib
        H[term.dst, term.src] += np.conj(contrib)
    H[np.diag_indices(n)] = H.diagonal().real + model.onsite_energies
    return BlochMatrix(k, H)


def exact_bands(bloch: BlochMatrix | np.ndarray) -> np.ndarray:
    """Eigenvalues of the Bloch matrix, ascending.

    Accepts a raw matrix too; it must be Hermitian within tolerance.
    """
    m = bloch.matrix if isinstance(bloch, BlochMatrix) else np.asarray(bloch)
    if m.ndim != 2 or m.shape[0] != m.shape[1]:
        raise ModelValidationError("band matrix must be square")
    scale = max(1.0, float(np.abs(m).max(initial=0.0)))
    if np.abs(m - m.conj().T).max(initial=0.0) > _HERMITICITY_TOL * scale:
        raise ModelValidationError("matrix is not Hermitian within tolerance")
    return np.linalg.eigvalsh(m)


def kpath(
    points: "list[tuple[str, np.ndarray]] | tuple",
    points_per_segment: int,
) -> list[KVector]:
    """Piecewise-linear path through labeled Cartesian k-points.

    Each segment carries ``points_per_segment`` points including both ends;
    shared endpoints are emitted once, so S segments yield
    S*(points_per_segment - 1) + 1 points.  ``path_distance`` accumulates
    Cartesian arc length; corner points keep their labels.
    """
    if points_per_segment < 2:
        raise ModelValidationError("points_per_segment must be >= 2")
    if len(points) < 2:
        raise ModelValidationError("a path needs at least two labeled points")
    out: list[KVector] = []
    dist = 0.0
    for s in range(len(points) - 1):
        label_a, a = points[s]
        label_b, b = points[s + 1]
        a = np.asarray(a, dtype=float)
        b = np.asarray(b, dtype=float)
        seg_len = float(np.linalg.norm(b - a))
        for i in range(points_per_segment):
            if s > 0 and i == 0:
                continue  # shared with the previous segment's endpoint
            t = i / (points_per_segment - 1)
            comp = (1.0 - t) * a + t * b
            comp.setflags(write=False)
            label = None
            if i == 0:
                label = label_a
            elif i == points_per_segment - 1:
                label = label_b
            out.append(KVector(comp, dist + t * seg_len, label))
        dist += seg_len
    return out
