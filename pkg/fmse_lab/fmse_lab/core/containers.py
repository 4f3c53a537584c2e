"""
Dependency injection container configuration for the FMSE lab.
Uses dependency-injector framework for clean, testable dependency management.
"""
from dependency_injector import containers, providers

from .config import get_lab_config


class LabContainer(containers.DeclarativeContainer):
    """Main lab dependency injection container."""

    # Configuration
    config = providers.Factory(get_lab_config)

    # Linear algebra
    dirichlet_solver = providers.Singleton(
        "fmse_lab.src.solver.DirichletSolver",
        condition_limit=config.provided.condition_limit,
        threads=config.provided.threads
    )

    # Pipelines built on the solver
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

    # Main orchestration
    experiment_runner = providers.Factory(
        "fmse_lab.src.experiment_runner.ExperimentRunner",
        config=config,
        dirichlet_solver=dirichlet_solver,
        gauge_inspector=gauge_inspector,
        recovery_engine=recovery_engine
    )


# Global container instance
container = LabContainer()
