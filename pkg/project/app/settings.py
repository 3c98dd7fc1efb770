from __future__ import annotations

import os

from dotenv import load_dotenv
from pydantic import Field
from pydantic_settings import BaseSettings, SettingsConfigDict

# Load environment variables from .env file
load_dotenv()


class Settings(BaseSettings):
    """Process-level knobs. None of them change simulation results."""

    model_config = SettingsConfigDict(env_prefix="ENTROUTE_", extra="ignore")

    threads: int = Field(0, ge=0, description="Worker processes, 0 = all cores")
    log_level: str = Field("INFO", description="Root log level")
    trace_control: bool = Field(False, description="Log every DIS/DIO/DAO message at DEBUG")
    audit: bool = Field(False, description="Run the structural auditors after every step")

    def worker_count(self) -> int:
        if self.threads == 0:
            return os.cpu_count() or 1
        return self.threads


def get_settings() -> Settings:
    return Settings()
