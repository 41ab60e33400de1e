from pydantic_settings import BaseSettings, SettingsConfigDict


class Settings(BaseSettings):
    enumeration_cap: int = 200_000
    sample_size: int = 2_000
    seed: int = 0
    output_dir: str = "reports"
    log_level: str = "INFO"

    model_config = SettingsConfigDict(
        env_prefix="RC_", env_file=".env", env_file_encoding="utf-8"
    )


settings = Settings()
