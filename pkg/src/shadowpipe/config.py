"""Pipeline configuration: one JSON file, validated strictly before stage 1.

Shape:
    {"general": {"input_dir": str, "file_extensions": [str], "run_dir": str},
     "modules": [{"stage": str, "params": {...}}]}

A stage may appear more than once; later instances get distinct artifact
directories (<stage>__2, <stage>__3, ...).
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

from .errors import ParseError, ValidationError
from .stages import STAGE_SPECS


@dataclass
class StageInstance:
    stage: str
    instance: str
    params: dict


@dataclass
class PipelineConfig:
    input_dir: Path
    file_extensions: list[str]
    run_dir: Path
    modules: list[StageInstance]
    snapshot: dict = field(repr=False, default_factory=dict)


def load_config(path: Path) -> PipelineConfig:
    try:
        with open(path, "r", encoding="utf-8") as fh:
            doc = json.load(fh)
    except OSError as exc:
        raise ParseError(f"cannot read config: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise ParseError(f"config is not valid JSON: {exc}") from exc
    return validate_config(doc)


def _check_type(stage: str, name: str, value, expected) -> None:
    if expected is float:
        ok = isinstance(value, (int, float)) and not isinstance(value, bool)
    elif expected is int:
        ok = isinstance(value, int) and not isinstance(value, bool)
    else:
        ok = isinstance(value, expected)
    if not ok:
        raise ValidationError(
            f"stage '{stage}': param '{name}' has type "
            f"{type(value).__name__}, expected {getattr(expected, '__name__', expected)}")


def validate_config(doc: dict) -> PipelineConfig:
    if not isinstance(doc, dict):
        raise ValidationError("config root must be an object")
    general = doc.get("general")
    if not isinstance(general, dict):
        raise ValidationError("missing 'general' section")
    for key in ("input_dir", "file_extensions", "run_dir"):
        if key not in general:
            raise ValidationError(f"general: missing '{key}'")
    extensions = general["file_extensions"]
    if (not isinstance(extensions, list) or not extensions
            or not all(isinstance(e, str) for e in extensions)):
        raise ValidationError("general.file_extensions must be a non-empty "
                              "list of strings")

    modules_doc = doc.get("modules")
    if not isinstance(modules_doc, list) or not modules_doc:
        raise ValidationError("'modules' must be a non-empty list")

    modules: list[StageInstance] = []
    seen_counts: dict[str, int] = {}
    for i, entry in enumerate(modules_doc):
        if not isinstance(entry, dict) or "stage" not in entry:
            raise ValidationError(f"modules[{i}]: needs a 'stage' name")
        stage = entry["stage"]
        if stage not in STAGE_SPECS:
            raise ValidationError(
                f"modules[{i}]: unknown stage '{stage}' (registered: "
                f"{', '.join(sorted(STAGE_SPECS))})")
        spec = STAGE_SPECS[stage]
        params = entry.get("params", {})
        if not isinstance(params, dict):
            raise ValidationError(f"stage '{stage}': params must be an object")
        for name, value in params.items():
            if name not in spec.params:
                raise ValidationError(
                    f"stage '{stage}': unknown param '{name}'")
            expected = spec.params[name].type
            if value is not None and expected is not None:
                _check_type(stage, name, value, expected)
        for name, pspec in spec.params.items():
            if pspec.required and params.get(name) is None:
                raise ValidationError(
                    f"stage '{stage}': missing required param '{name}'")
        merged = {
            name: params.get(name, pspec.default)
            for name, pspec in spec.params.items()
        }
        seen_counts[stage] = seen_counts.get(stage, 0) + 1
        instance = stage if seen_counts[stage] == 1 else f"{stage}__{seen_counts[stage]}"
        modules.append(StageInstance(stage=stage, instance=instance, params=merged))

    # Dependency order: hard prerequisites must already be configured; soft
    # predecessors (after_if_present) may be absent but never come later.
    stages_before: set[str] = set()
    all_stages = {m.stage for m in modules}
    for i, inst in enumerate(modules):
        spec = STAGE_SPECS[inst.stage]
        for req in spec.requires:
            if req not in stages_before:
                raise ValidationError(
                    f"modules[{i}]: stage '{inst.stage}' requires '{req}' "
                    f"earlier in the pipeline")
        for soft in spec.after_if_present:
            if soft in all_stages and soft not in stages_before \
                    and soft != inst.stage:
                raise ValidationError(
                    f"modules[{i}]: stage '{inst.stage}' must come after "
                    f"'{soft}' when both are configured")
        stages_before.add(inst.stage)

    snapshot = {
        "general": {
            "input_dir": str(general["input_dir"]),
            "file_extensions": list(extensions),
            "run_dir": str(general["run_dir"]),
        },
        "modules": [
            {"stage": m.stage, "instance": m.instance, "params": m.params}
            for m in modules
        ],
    }
    return PipelineConfig(
        input_dir=Path(general["input_dir"]),
        file_extensions=[e.lower() for e in extensions],
        run_dir=Path(general["run_dir"]),
        modules=modules,
        snapshot=snapshot,
    )
