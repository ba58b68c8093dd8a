from typing import Dict, List

from fastapi import APIRouter, HTTPException, Path, status

from src.models.run_models import RunManifest
from src.utils.exceptions import RunNotFoundException, WickLabException
from src.utils.run_store import RunStore


router = APIRouter(prefix="/runs", tags=["Runs"])


def get_store() -> RunStore:
    """Run store rooted at the configured output directory."""
    return RunStore()


@router.get("", response_model=List[RunManifest], summary="List stored runs")
async def list_runs():
    """
    List the manifests of every stored run, newest first.

    **Returns**:
    - Kind, parameters, seed, settings snapshot and output digests per run
    """
    try:
        return get_store().list_runs()
    except WickLabException as e:
        raise HTTPException(status_code=status.HTTP_500_INTERNAL_SERVER_ERROR, detail=str(e))


@router.delete("/clear", summary="Delete every stored run")
async def clear_runs():
    """
    Delete every run directory under the output directory.

    **Returns**:
    - Number of runs removed
    """
    try:
        removed = get_store().clear()
        return {"message": f"Removed {removed} runs", "removed": removed}
    except WickLabException as e:
        raise HTTPException(status_code=status.HTTP_500_INTERNAL_SERVER_ERROR, detail=str(e))


@router.get("/{run_id}", response_model=RunManifest, summary="Get a run manifest")
async def get_run(
    run_id: str = Path(..., description="Run id, e.g. '20260101T120000000000-invariance-s7'", min_length=1)
):
    """
    Get the manifest of one run.

    **Example**: `/runs/20260101T120000000000-invariance-s7`
    """
    try:
        return get_store().read_manifest(run_id)
    except RunNotFoundException as e:
        raise HTTPException(status_code=status.HTTP_404_NOT_FOUND, detail=str(e))
    except WickLabException as e:
        raise HTTPException(status_code=status.HTTP_500_INTERNAL_SERVER_ERROR, detail=str(e))


@router.get("/{run_id}/tables", response_model=List[str], summary="List the tables of a run")
async def list_tables(run_id: str = Path(..., min_length=1)):
    try:
        return get_store().list_tables(run_id)
    except RunNotFoundException as e:
        raise HTTPException(status_code=status.HTTP_404_NOT_FOUND, detail=str(e))


@router.get("/{run_id}/tables/{name}", response_model=List[Dict[str, str]], summary="Get a table of a run")
async def get_table(
    run_id: str = Path(..., min_length=1),
    name: str = Path(..., description="Table name without the .csv suffix, e.g. 'observables'", min_length=1),
):
    """
    Get one CSV table of a run as a list of rows.

    Cells are returned as written (strings); empty cells stand for missing values.

    **Example**: `/runs/{run_id}/tables/observables`
    """
    try:
        return get_store().read_table(run_id, name)
    except RunNotFoundException as e:
        raise HTTPException(status_code=status.HTTP_404_NOT_FOUND, detail=str(e))
    except WickLabException as e:
        raise HTTPException(status_code=status.HTTP_500_INTERNAL_SERVER_ERROR, detail=str(e))
