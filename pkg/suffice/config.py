from functools import lru_cache
from typing import Optional

from pydantic import Field
from pydantic_settings import BaseSettings, SettingsConfigDict


class Settings(BaseSettings):
    """
    Configuración del proceso usando Pydantic Settings.
    Lee variables de entorno automáticamente.
    """

    # Paralelismo de repeticiones (SUFFICE_THREADS); ausente -> ejecución serial
    suffice_threads: Optional[int] = Field(None, ge=1)

    # Logging
    log_level: str = "INFO"

    # Salida de resultados
    record_timing: bool = False
    csv_precision: int = Field(6, ge=1, le=17)
    svg_hashsalt: str = "suffice"

    # Configuración de la aplicación
    app_name: str = "Suffice"
    app_version: str = "1.0.0"

    model_config = SettingsConfigDict(env_file=".env", env_file_encoding="utf-8", extra="ignore")


@lru_cache()
def get_settings() -> Settings:
    """
    Función para obtener la configuración de manera singleton.
    """
    return Settings()
