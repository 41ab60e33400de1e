import logging

from fastapi import FastAPI
from fastapi.middleware.cors import CORSMiddleware

from src.conf.config import settings
from src.protocols.registry import BUILDERS
from src.routes import experiments

logging.basicConfig(level=settings.log_level)

app = FastAPI(title="rational-consensus")

app.include_router(experiments.router, prefix="/api")

app.add_middleware(
    CORSMiddleware,
    allow_origins=["*"],
    allow_credentials=True,
    allow_methods=["*"],
    allow_headers=["*"],
)


@app.get("/")
def read_root():
    """
    The read_root function lists the protocols the service can run.

    :return: dct
    """

    return {"message": "rational-consensus", "protocols": sorted(BUILDERS)}
