from fastapi import APIRouter, HTTPException, status

from src.errors import ConfigInvalid, ConsensusLabError
from src.schemas import EquilibriumResponse, ExperimentConfig, RunSummary, VerifyResponse
from src.services import experiments

router = APIRouter(prefix="/experiments", tags=["experiments"])


def _raise_for(err: ConsensusLabError):
    code = (
        status.HTTP_422_UNPROCESSABLE_ENTITY
        if isinstance(err, ConfigInvalid)
        else status.HTTP_400_BAD_REQUEST
    )
    raise HTTPException(status_code=code, detail={"kind": err.kind, "message": str(err)})


@router.post("/run", response_model=RunSummary)
def run_experiment(config: ExperimentConfig):
    """
    The run_experiment function enumerates every run of the configured protocol
    and returns the outcome summary without writing files.

    :param config: ExperimentConfig: The experiment to run
    :return: The run summary
    """

    try:
        return experiments.cmd_run(config).document
    except ConsensusLabError as err:
        _raise_for(err)


@router.post("/equilibrium", response_model=EquilibriumResponse)
def check_equilibrium(config: ExperimentConfig):
    """
    The check_equilibrium function searches the configured strategy space.

    :param config: ExperimentConfig: Protocol, coalition and strategy space
    :return: One report per preferred value
    """

    try:
        return experiments.cmd_equilibrium(config).document
    except ConsensusLabError as err:
        _raise_for(err)


@router.post("/verify", response_model=VerifyResponse)
def verify(config: ExperimentConfig):
    """Runs the verifier named by the config's check field."""

    try:
        return experiments.cmd_verify(config).document
    except ConsensusLabError as err:
        _raise_for(err)
