import logging
import os

from dotenv import load_dotenv
from fastapi import FastAPI

from morphshell.routers.simulation_router import router as simulation_router

load_dotenv()

logging.basicConfig(
    level=os.environ.get("MORPHSHELL_LOG_LEVEL", "INFO").upper(),
    format="%(asctime)s %(levelname)s %(name)s: %(message)s",
)
logger = logging.getLogger(__name__)

app = FastAPI(
    title="morphshell",
    description="Reduced-order simulation of heat-morphing bilayer shells",
)
app.include_router(simulation_router)
logger.info("morphshell API started")
