"""
Test dependency injection container configuration.
Provides an isolated configuration with fixed test defaults.
"""
from dependency_injector import containers, providers

from .config import LabConfig


class TestLabContainer(containers.DeclarativeContainer):
    """Test container with a fixed configuration, independent of FMSE_* variables."""

    config = providers.Factory(
        LabConfig,
        default_seed=12345,
        threads=1,
        output_dir="fmse_test_output",
        environment="test"
    )

    dirichlet_solver = providers.Factory(
        "fmse_lab.src.solver.DirichletSolver",
        condition_limit=config.provided.condition_limit,
        threads=config.provided.threads
    )

    gauge_inspector = providers.Factory(
        "fmse_lab.src.gauge.GaugeInspector",
        solver=dirichlet_solver,
        tolerance=config.provided.tolerance
    )

    recovery_engine = providers.Factory(
        "fmse_lab.src.inverse.RecoveryEngine",
        solver=dirichlet_solver,
        rank_cutoff=config.provided.rank_cutoff
    )

    experiment_runner = providers.Factory(
        "fmse_lab.src.experiment_runner.ExperimentRunner",
        config=config,
        dirichlet_solver=dirichlet_solver,
        gauge_inspector=gauge_inspector,
        recovery_engine=recovery_engine
    )


# Global test container instance
test_container = TestLabContainer()
