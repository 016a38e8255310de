"""Static checks for stage programs.

validate() enforces the three hard placement rules and returns violations
(an empty list means the program is runnable under the given profile):

  * RegisterCrossStage: a stateful instruction touches a register array that
    is not declared in its own stage (stateful memory is stage-local), or an
    array is declared twice.
  * BackwardDependency: an instruction (or its predicate) reads a field that
    no earlier instruction wrote and that is not a declared input field.
    Stages execute strictly in order; data never flows backwards.
  * UnsupportedCapability: an instruction requires an ALU capability the
    profile does not offer.

check_resources() is advisory: it flags stages whose instruction count or
table entry count exceeds per-stage limits. Pressure is a warning, not an
error; real targets vary, so the limits are configurable.
"""

from __future__ import annotations

from dataclasses import dataclass

from .program import AluProfile, Capability, Instruction, Stage, StageProgram

__all__ = [
    "Violation",
    "validate",
    "ResourceLimits",
    "ResourcePressure",
    "check_resources",
]


@dataclass(frozen=True)
class Violation:
    rule: str  # "RegisterCrossStage" | "BackwardDependency" | "UnsupportedCapability"
    stage_id: int
    stage_name: str
    detail: str
    instruction_index: int | None = None
    capability: Capability | None = None

    def __str__(self) -> str:
        where = f"stage {self.stage_id} ({self.stage_name})"
        if self.instruction_index is not None:
            where += f" instr {self.instruction_index}"
        return f"{where}: {self.rule}: {self.detail}"


def _instr_reads(ins: Instruction) -> tuple[str, ...]:
    return ins.reads() + tuple(p.field for p in ins.preds)


def validate(program: StageProgram, profile: AluProfile) -> list[Violation]:
    violations: list[Violation] = []

    # Register arrays are owned by the stage that declares them.
    owner: dict[str, Stage] = {}
    for stage in program.stages:
        for reg in stage.registers:
            if reg.name in owner:
                violations.append(
                    Violation(
                        "RegisterCrossStage",
                        stage.id,
                        stage.name,
                        f"register array {reg.name!r} already declared in stage "
                        f"{owner[reg.name].id} ({owner[reg.name].name})",
                    )
                )
            else:
                owner[reg.name] = stage

    defined = set(program.input_fields)
    for stage in program.stages:
        for idx, ins in enumerate(stage.instructions):
            arr = ins.register_array()
            if arr is not None:
                home = owner.get(arr)
                if home is None:
                    violations.append(
                        Violation(
                            "RegisterCrossStage",
                            stage.id,
                            stage.name,
                            f"register array {arr!r} is not declared in any stage",
                            instruction_index=idx,
                        )
                    )
                elif home.id != stage.id:
                    violations.append(
                        Violation(
                            "RegisterCrossStage",
                            stage.id,
                            stage.name,
                            f"register array {arr!r} belongs to stage "
                            f"{home.id} ({home.name})",
                            instruction_index=idx,
                        )
                    )

            for name in _instr_reads(ins):
                if name not in defined:
                    violations.append(
                        Violation(
                            "BackwardDependency",
                            stage.id,
                            stage.name,
                            f"field {name!r} read before any write "
                            "(and not an input field)",
                            instruction_index=idx,
                        )
                    )

            if not profile.supports(ins.capability):
                violations.append(
                    Violation(
                        "UnsupportedCapability",
                        stage.id,
                        stage.name,
                        f"{type(ins).__name__} requires {ins.capability.value}, "
                        f"not offered by profile {profile.name!r}",
                        instruction_index=idx,
                        capability=ins.capability,
                    )
                )

            defined.update(ins.writes())

    return violations


@dataclass(frozen=True)
class ResourceLimits:
    instruction_slots: int = 32   # per-stage VLIW slots
    table_entries: int = 4096     # per-stage match entries


@dataclass(frozen=True)
class ResourcePressure:
    stage_id: int
    stage_name: str
    resource: str  # "instruction_slots" | "table_entries"
    used: int
    limit: int

    def __str__(self) -> str:
        return (
            f"stage {self.stage_id} ({self.stage_name}): {self.resource} "
            f"pressure: {self.used} used, limit {self.limit}"
        )


def check_resources(
    program: StageProgram, limits: ResourceLimits = ResourceLimits()
) -> list[ResourcePressure]:
    pressure: list[ResourcePressure] = []
    for stage in program.stages:
        n_ins = len(stage.instructions)
        if n_ins > limits.instruction_slots:
            pressure.append(
                ResourcePressure(
                    stage.id, stage.name, "instruction_slots", n_ins, limits.instruction_slots
                )
            )
        n_entries = sum(len(t.entries) for t in stage.tables)
        if n_entries > limits.table_entries:
            pressure.append(
                ResourcePressure(
                    stage.id, stage.name, "table_entries", n_entries, limits.table_entries
                )
            )
    return pressure
