from typing import Optional
from pydantic_settings import BaseSettings


class Settings(BaseSettings):
    # Application
    APP_NAME: str = "TensegrityTracker"
    DEBUG: bool = False
    LOG_LEVEL: str = "INFO"

    # Simulation
    RENDER_WORKERS: int = 4
    DEFAULT_CONFIG: Optional[str] = None

    class Config:
        env_file = ".env"
        env_prefix = "TENSEGRITY_"


settings = Settings()
