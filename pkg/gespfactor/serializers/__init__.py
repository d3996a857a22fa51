"""Artifact serializers shared by every CLI subcommand."""

from gespfactor.serializers.artifacts import dumps_json, write_csv, write_json

__all__ = ["dumps_json", "write_csv", "write_json"]
