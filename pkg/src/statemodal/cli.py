"""Command-line front end: ``statemodal mesh|eig|offline|run|dyn|compare``.

Exit codes: 0 success, 1 usage or input error, 2 numerical failure.
"""

from __future__ import annotations

import logging
import sys
import warnings
from pathlib import Path

import click
import numpy as np

from .core import StateDataError, load_state, validate_state
from .eigensolver import ConvergenceError, MatchingError, SpectrumRequest, solve_alpha
from .fem import FeSpace, assemble_block_system
from .hexmesh import KAPPA_LEVELS, LayoutError, build_mesh, load_layout
from .linalg import SchurConvergenceError, SingularShiftError
from .modal import BasisError

EXIT_USAGE = 1
EXIT_NUMERICAL = 2

_NUMERICAL = (ConvergenceError, SingularShiftError, SchurConvergenceError, BasisError,
              MatchingError, ArithmeticError)

log = logging.getLogger("statemodal")


def _scm():
    from . import scm

    return scm


kappa_opt = click.option("--kappa", type=click.Choice([str(k) for k in sorted(KAPPA_LEVELS)]),
                         default="24", show_default=True, help="Triangles per assembly.")
degree_opt = click.option("--degree", type=click.IntRange(1, 3), default=2, show_default=True,
                          help="Finite-element polynomial degree.")
out_opt = click.option("--out", type=click.Path(path_type=Path), default=None,
                       help="Output file or directory.")
threads_opt = click.option("--threads", type=click.IntRange(1), default=1, show_default=True,
                           help="Worker threads for the offline stage.")


@click.group()
@click.version_option(package_name="artifact")
def cli():
    """Modal simulation of reactor state changes on hexagonal cores."""


@cli.command()
@click.option("--layout", type=click.Path(exists=True, dir_okay=False, path_type=Path), required=True)
@kappa_opt
@out_opt
def mesh(layout, kappa, out):
    """Triangulate a layout and print its size and area."""
    m = build_mesh(load_layout(layout), int(kappa))
    s = m.summary()
    click.echo(f"assemblies: {len(np.unique(m.assemblies))}")
    click.echo(f"vertices: {s['vertices']}")
    click.echo(f"triangles: {s['triangles']}")
    click.echo(f"boundary edges: {s['boundary_edges']}")
    click.echo(f"area: {s['area']:.6f}")
    if out is not None:
        out.mkdir(parents=True, exist_ok=True)
        np.savetxt(out / "vertices.csv", m.vertices, delimiter=",", header="x,y", comments="", fmt="%.17g")
        np.savetxt(out / "triangles.csv", np.column_stack([m.triangles, m.materials]), delimiter=",",
                   header="v0,v1,v2,material", comments="", fmt="%d")


@cli.command()
@click.option("--layout", type=click.Path(exists=True, dir_okay=False, path_type=Path), required=True)
@click.option("--state", type=click.Path(exists=True, dir_okay=False, path_type=Path), required=True)
@kappa_opt
@degree_opt
@click.option("--modes", type=click.IntRange(1), default=10, show_default=True)
@click.option("--tol", type=float, default=1e-10, show_default=True)
@click.option("--adjoint", is_flag=True, help="Also solve the adjoint problem.")
@out_opt
def eig(layout, state, kappa, degree, modes, tol, adjoint, out):
    """Dominant alpha-eigenvalues as CSV ``n,re_alpha,im_alpha,residual``."""
    st = load_state(state)
    for w in validate_state(st):
        click.echo(f"warning: {w}", err=True)
    mesh_ = build_mesh(load_layout(layout), int(kappa))
    op = assemble_block_system(st, FeSpace(mesh_, degree))
    kinds = ["direct", "adjoint"] if adjoint else ["direct"]
    for which in kinds:
        res = solve_alpha(op, SpectrumRequest(n_modes=modes, which=which, tol=tol))
        lines = ["n,re_alpha,im_alpha,residual"]
        lines += [f"{i + 1},{m.value.real:.17g},{m.value.imag:.17g},{m.residual:.3e}" for i, m in enumerate(res)]
        text = "\n".join(lines) + "\n"
        if out is None:
            if adjoint:
                click.echo(f"# {which}")
            click.echo(text, nl=False)
        else:
            path = out if which == "direct" else out.with_name(out.stem + "_adjoint" + out.suffix)
            path.parent.mkdir(parents=True, exist_ok=True)
            path.write_text(text)


scenario_opt = click.option("--scenario", type=click.Path(exists=True, dir_okay=False, path_type=Path),
                            required=True)


@cli.command()
@scenario_opt
@threads_opt
@out_opt
def offline(scenario, threads, out):
    """Build and store the eigen-library of every scenario state."""
    scm = _scm()
    sc = scm.load_scenario(scenario)
    out = out or Path("library")
    lib = scm.offline_build(sc, out, threads=threads)
    for e in lib.entries:
        click.echo(f"state {e.index}: {len(e.direct)} modes, alpha_1 = {e.direct[0].value.real:.8g}  ({e.label})")
    click.echo(f"library written to {out}")


@cli.command()
@scenario_opt
@click.option("--library", type=click.Path(path_type=Path), default=None,
              help="Library directory (default OUT/library).")
@click.option("--offline", "do_offline", is_flag=True, help="Build the library first.")
@click.option("--reference", is_flag=True, help="Also run implicit Euler and report errors.")
@click.option("--modes", type=click.IntRange(1), default=None, help="Use only the first N stored modes.")
@click.option("--window", type=(float, float), default=None, help="Error window (default: whole run).")
@threads_opt
@out_opt
def run(scenario, library, do_offline, reference, modes, window, threads, out):
    """Online SCM run; writes modal.csv (and reference.csv, report.txt)."""
    scm = _scm()
    sc = scm.load_scenario(scenario)
    out = out or Path("out")
    out.mkdir(parents=True, exist_ok=True)
    if sc.t_end <= sc.t0:
        click.echo("warning: zero-length scenario, writing an empty trajectory", err=True)
        with warnings.catch_warnings():
            warnings.simplefilter("ignore")
            traj = scm.online_run(sc, None)
        traj.to_csv(out / "modal.csv")
        return
    lib_dir = library or out / "library"
    resolved = scm.resolve_states(sc)
    if do_offline:
        lib = scm.offline_build(sc, lib_dir, threads=threads, resolved=resolved)
    else:
        lib = scm.StateLibrary.load(lib_dir)
    traj = scm.online_run(sc, lib, resolved, n_modes=modes)
    traj.to_csv(out / "modal.csv")
    click.echo(f"modal trajectory: {len(traj)} points -> {out / 'modal.csv'}")
    if reference:
        ref = scm.reference_run(sc, lib, resolved=resolved)
        ref.to_csv(out / "reference.csv")
        win = window or (float(traj.times[0]), float(traj.times[-1]))
        rep = scm.compare_runs(traj, ref, win)
        (out / "report.txt").write_text(
            f"method = {sc.method}\nevolution = {sc.evolution}\n"
            f"discontinuities = {traj.meta['discontinuities']}\n" + rep.as_text()
        )
        click.echo(rep.as_text(), nl=False)


@cli.command()
@scenario_opt
@click.option("--tau", type=float, default=None, help="Time step (default: scenario reference_tau).")
@out_opt
def dyn(scenario, tau, out):
    """Implicit Euler reference trajectory of a scenario."""
    scm = _scm()
    sc = scm.load_scenario(scenario)
    resolved = scm.resolve_states(sc)
    lib = None
    if sc.initial == "first-mode":
        # only the first mode of state 0 is needed for the initial condition
        from .scm import LibraryEntry, StateLibrary

        v = solve_alpha(resolved[0].op, SpectrumRequest(n_modes=1, tol=sc.tol))
        lib = StateLibrary(sc.kappa, sc.degree, [LibraryEntry(0, resolved[0].state.label, resolved[0].fingerprint, v)])
    traj = scm.reference_run(sc, lib, tau=tau, resolved=resolved)
    out = out or Path("reference.csv")
    out.parent.mkdir(parents=True, exist_ok=True)
    traj.to_csv(out)
    click.echo(f"reference trajectory: {len(traj)} points -> {out}")


@cli.command()
@click.argument("modal", type=click.Path(exists=True, dir_okay=False, path_type=Path))
@click.argument("reference", type=click.Path(exists=True, dir_okay=False, path_type=Path))
@click.option("--window", type=(float, float), required=True)
@out_opt
def compare(modal, reference, window, out):
    """Relative P and C errors of two ``t,P,C`` trajectories."""
    from .dynamics import Trajectory

    rep = _scm().compare_runs(Trajectory.from_csv(modal), Trajectory.from_csv(reference), window)
    click.echo(rep.as_text(), nl=False)
    if out is not None:
        out.write_text(rep.as_text())


def main(argv: list[str] | None = None) -> int:
    """Entry point with the documented exit codes."""
    logging.basicConfig(level=logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
    scm = _scm()
    input_errors = (LayoutError, StateDataError, scm.ScenarioError, scm.LibraryError, OSError, ValueError)
    try:
        cli.main(args=argv, prog_name="statemodal", standalone_mode=False)
    except click.exceptions.Abort:
        click.echo("aborted", err=True)
        return EXIT_USAGE
    except click.ClickException as exc:
        exc.show()
        return EXIT_USAGE
    except scm.OfflineError as exc:
        click.echo(f"error: {exc}", err=True)
        return EXIT_NUMERICAL
    except _NUMERICAL as exc:
        click.echo(f"numerical failure: {exc}", err=True)
        return EXIT_NUMERICAL
    except input_errors as exc:
        click.echo(f"error: {exc}", err=True)
        return EXIT_USAGE
    return 0


if __name__ == "__main__":
    sys.exit(main())
