"""Bundled rule packs (gdpr, stride, linddun) shipped as package resources."""
from importlib.resources import files


def bundled_pack_text(name: str) -> str:
    resource = files(__name__).joinpath(f"{name}.rules")
    if not resource.is_file():
        raise FileNotFoundError(name)
    return resource.read_text(encoding="utf-8")
