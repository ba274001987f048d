"""Prompt bundles for the generation pipeline: the role/label schemas for
state-section completion, dataset augmentation, connection inference, and
function generation."""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass
from enum import Enum

from .diagnostics import XlangError
from .model import ModelUnit, UnitKind
from .printer import print_unit, section_lines


class FewShotRequired(XlangError):
    """Augmentation prompts need at least one example model."""


class Role(str, Enum):
    USER = "user"
    SYSTEM = "system"


class Label(str, Enum):
    BNF = "BNF"
    STATE_SPEC = "StateSpec"
    STATE_RESPONSE = "StateResponse"
    INTRODUCTION = "Introduction"
    COUPLE_TEXT = "CoupleText"
    ATOMIC_TEXT = "AtomicText"
    GENERATED_CODE = "GeneratedCode"
    NOTE = "Note"
    INPUT = "Input"
    TASK = "Task"


@dataclass(frozen=True)
class PromptMessage:
    role: Role
    label: Label
    content: str


@dataclass(frozen=True)
class PromptBundle:
    messages: tuple[PromptMessage, ...] = ()

    def to_wire(self) -> list[dict]:
        return [{"role": m.role.value, "content": m.content} for m in self.messages]

    def to_dict(self) -> list[dict]:
        return [
            {"role": m.role.value, "label": m.label.value, "content": m.content}
            for m in self.messages
        ]

    def digest(self) -> str:
        canonical = json.dumps(self.to_dict(), sort_keys=True, ensure_ascii=False)
        return hashlib.sha256(canonical.encode("utf-8")).hexdigest()

    def message(self, label: Label) -> PromptMessage | None:
        for m in self.messages:
            if m.label is label:
                return m
        return None


STATE_PROMPT_ORDER = (
    Label.BNF,
    Label.STATE_SPEC,
    Label.STATE_RESPONSE,
    Label.INTRODUCTION,
    Label.COUPLE_TEXT,
    Label.ATOMIC_TEXT,
    Label.GENERATED_CODE,
    Label.NOTE,
)


X_GRAMMAR_BNF = """X language textual form (BNF):

  <file>        ::= <unit>+
  <unit>        ::= <kind> <Identifier> <import>* <section>* "end;"
  <kind>        ::= "couple" | "discrete" | "continuous" | "function"
  <import>      ::= "import" <Identifier> ";"
  <section>     ::= ("part:" | "parameter:" | "value:" | "port:"
                   | "connection:" | "state:" | "equation:" | "body:") <item>*
  <part item>   ::= <ClassName> <InstanceName> ";"
  <binding>     ::= <DataType> <Name> ["=" <Literal>] ";"
  <port item>   ::= ["input" | "output"] <PortType> <Name> ["=" <Literal>] ";"
  <connect>     ::= "connect(" <Part> "." <Port> "," <Part> "." <Port> ");"
  <state block> ::= ["initial"] "state" <Name> <when>* "end;"
  <when>        ::= "when entry() then" <entry>* "end;"
                  | "when" <Condition> "transform" <TargetState> "then" <action>* "end;"
  <entry>       ::= "statehold(" <Number> | "inf" ");" | <action>
  <action>      ::= <Name> "=" <Expression> ";"
  <equation>    ::= "der(" <Name> ")" "=" <Expression> ";" | <Name> "=" <Expression> ";"

Data types: Real, Int, Bool, String.  Expressions use + - * / comparisons,
and/or/not, and calls to imported function classes or the built-ins
sin, cos, exp, log, abs, min, max."""


STATE_SPEC_TEXT = """The state part of a discrete class model lists the states the model
moves through.  Exactly one state is marked `initial state`.  Each state
may open with `when entry() then ... end;` holding `statehold(T);` (how
long the state persists before its internal transition; omit or use inf
for a passive state) plus entry assignments; writing to an output port
emits an event.  Each `when <condition> transform <Target> then ... end;`
block moves the model to <Target> when the condition holds, running its
actions first.  The value part declares the variables those actions use,
one `<DataType> <name> = <initial>;` per line."""

EQUATION_SPEC_TEXT = """The equation part of a continuous class model describes its dynamic
behavior, one semicolon-terminated equation per line.  `der(x) = <expr>;`
sets the derivative of a declared value or port x; `y = <expr>;` assigns
an algebraic variable or output port each step.  The value part declares
the variables the equations use, one `<DataType> <name> = <initial>;`
per line."""

STATE_RESPONSE_TEXT = """Understood.  I will produce only well-formed X language code for the
requested sections: semicolon-terminated declarations, state blocks opened
with `state <Name>` and closed with `end;`, conditions referencing only
declared ports, values, and parameters, and no prose around the code."""

# Introduction rows, one per atomic kind; the discrete wording is the
# canonical one for value+state completion.
INTRO_STATE = (
    "Drawing on the textual descriptions of both the system model and the "
    "subsystem model, please develop the code for the keyword State of the "
    "discrete class subsystem model in accordance with the modeling "
    "specifications for the keyword State and the preceding code parts of "
    "the discrete class model. Note that only the code of the keyword State "
    "should be included in your output."
)
INTRO_EQUATION = (
    "Drawing on the textual descriptions of both the system model and the "
    "subsystem model, please develop the code for the keyword Equation of the "
    "continuous class subsystem model in accordance with the modeling "
    "specifications for the keyword Equation and the preceding code parts of "
    "the continuous class model. Note that only the code of the keyword "
    "Equation should be included in your output."
)

AUGMENT_TASK_TEXT = (
    "Generate a couple/continuous/discrete simulation model of X language "
    "based on the model described in the aforementioned Input component."
)

MASK_INSTRUCTION_DISCRETE = (
    "This is a partially masked code for X language discrete class models. "
    "The parts represented by [MASK] may include value, state, and other "
    "keywords of discrete class models that have been concealed. Based on "
    "the available code, please speculate on the exact content in [MASK]."
)
MASK_INSTRUCTION_CONTINUOUS = (
    "This is a partially masked code for X language continuous class models. "
    "The parts represented by [MASK] may include value, equation, and other "
    "keywords of continuous class models that have been concealed. Based on "
    "the available code, please speculate on the exact content in [MASK]."
)

MASK_PARAPHRASES_DISCRETE = (
    "Some sections of this X language discrete class model were hidden and "
    "replaced with [MASK]; the hidden parts can cover value, state, and other "
    "keywords. Reconstruct the exact code behind each [MASK] from the code "
    "that remains.",
    "Below is an X language discrete class model whose value and state "
    "sections were blanked out with [MASK]. Infer the concealed code from "
    "the surrounding model and write out what each [MASK] stands for.",
)
MASK_PARAPHRASES_CONTINUOUS = (
    "Some sections of this X language continuous class model were hidden and "
    "replaced with [MASK]; the hidden parts can cover value, equation, and "
    "other keywords. Reconstruct the exact code behind each [MASK] from the "
    "code that remains.",
    "Below is an X language continuous class model whose value and equation "
    "sections were blanked out with [MASK]. Infer the concealed code from "
    "the surrounding model and write out what each [MASK] stands for.",
)


_DEFAULT_EXAMPLE_SOURCES = (
    """discrete Valve
parameter:
  Real threshold = 5;
value:
  Real opening = 0;
port:
  input Real cmd = 0;
  output Real flow = 0;
state:
  initial state Closed
    when entry() then
      statehold(inf);
      flow = 0;
    end;
    when cmd > threshold transform Open then
      opening = 1;
    end;
  end;
  state Open
    when entry() then
      statehold(inf);
      flow = opening * 10;
    end;
    when cmd <= threshold transform Closed then
      opening = 0;
    end;
  end;
end;
""",
    """continuous Tank
parameter:
  Real area = 2;
value:
  Real level = 0;
port:
  input Real inflow = 0;
  output Real head = 0;
equation:
  der(level) = inflow / area;
  head = level;
end;
""",
)


def default_example_library() -> list[ModelUnit]:
    from .parser import parse_unit

    return [parse_unit(src) for src in _DEFAULT_EXAMPLE_SOURCES]


def _example_snippets(examples: list[ModelUnit], kind: UnitKind) -> str:
    """Render few-shot section examples of the matching atomic kind."""
    snippets = []
    wanted = ("value", "state") if kind is UnitKind.DISCRETE else ("value", "equation")
    for unit in examples:
        if unit.kind is not kind:
            continue
        lines: list[str] = []
        for section in wanted:
            lines.extend(section_lines(unit, section))
        if lines:
            snippets.append(f"// example from {unit.name}\n" + "\n".join(lines))
    if not snippets:
        snippets = [print_unit(u) for u in examples]
    return "\n\n".join(snippets)


def build_state_prompt(
    couple_text: str,
    atomic_text: str,
    skeleton,
    notes: list[str] | None = None,
    examples: list[ModelUnit] | None = None,
) -> PromptBundle:
    """Eight-row bundle for completing an atomic skeleton's value+state
    (or value+equation) sections; rows follow the canonical label order."""
    kind = skeleton.kind
    if kind is UnitKind.DISCRETE:
        spec_text, intro = STATE_SPEC_TEXT, INTRO_STATE
    elif kind is UnitKind.CONTINUOUS:
        spec_text, intro = EQUATION_SPEC_TEXT, INTRO_EQUATION
    else:
        raise ValueError(f"state prompts are for atomic skeletons, not {kind.value}")
    if examples is None:
        examples = default_example_library()

    messages = [
        PromptMessage(Role.USER, Label.BNF, X_GRAMMAR_BNF),
        PromptMessage(
            Role.USER,
            Label.STATE_SPEC,
            spec_text + "\n\nExamples:\n\n" + _example_snippets(examples, kind),
        ),
        PromptMessage(Role.SYSTEM, Label.STATE_RESPONSE, STATE_RESPONSE_TEXT),
        PromptMessage(Role.USER, Label.INTRODUCTION, intro),
        PromptMessage(Role.USER, Label.COUPLE_TEXT, couple_text),
        PromptMessage(Role.USER, Label.ATOMIC_TEXT, atomic_text),
        PromptMessage(Role.USER, Label.GENERATED_CODE, skeleton.render_without_holes()),
    ]
    if notes:
        messages.append(PromptMessage(Role.USER, Label.NOTE, "\n".join(notes)))
    return PromptBundle(tuple(messages))


def validate_state_bundle(bundle: PromptBundle) -> list[str]:
    """Schema check: labels in canonical order, Introduction verbatim."""
    problems = []
    labels = [m.label for m in bundle.messages]
    order = [l for l in STATE_PROMPT_ORDER if l in labels]
    if labels != order:
        problems.append(f"labels out of order: {[l.value for l in labels]}")
    if labels.count(Label.NOTE) > 1:
        problems.append("more than one Note message")
    intro = bundle.message(Label.INTRODUCTION)
    if intro is None or not intro.content.startswith("Drawing on the textual descriptions"):
        problems.append("Introduction does not carry the canonical instruction")
    return problems


def build_augmentation_prompt(
    model_description: str, examples: list[ModelUnit], kind: UnitKind
) -> PromptBundle:
    """Introduction/Input/Task bundle for generating whole example models."""
    if not examples:
        raise FewShotRequired("augmentation prompts need at least one example model")
    intro = (
        "You write X language simulation models.\n\n"
        + X_GRAMMAR_BNF
        + "\n\nExample models:\n\n"
        + "\n".join(print_unit(u) for u in examples)
    )
    task = f"{AUGMENT_TASK_TEXT} Target class: {kind.value}."
    return PromptBundle(
        (
            PromptMessage(Role.USER, Label.INTRODUCTION, intro),
            PromptMessage(Role.USER, Label.INPUT, model_description),
            PromptMessage(Role.USER, Label.TASK, task),
        )
    )


def build_connection_prompt(
    corpus_sentences: list[str], composition_text: str, instances: list[str], notes: list[str] | None = None
) -> PromptBundle:
    intro = (
        "You derive signal connections between the subsystems of a "
        "simulation model. Output one line per connection, exactly of the "
        "form `connect(<part>.<port>, <part>.<port>);` with the source "
        "endpoint first, and nothing else.\n"
        f"Available parts: {', '.join(instances)}."
    )
    body = "System composition:\n" + composition_text + "\n\nConnection corpus:\n" + "\n".join(
        corpus_sentences
    )
    messages = [
        PromptMessage(Role.USER, Label.INTRODUCTION, intro),
        PromptMessage(Role.USER, Label.INPUT, body),
        PromptMessage(
            Role.USER,
            Label.TASK,
            "Derive the connection relationships between the subsystems from "
            "the corpus and the composition.",
        ),
    ]
    if notes:
        messages.append(PromptMessage(Role.USER, Label.NOTE, "\n".join(notes)))
    return PromptBundle(tuple(messages))


def build_function_prompt(symbol: str, caller_text: str, notes: list[str] | None = None) -> PromptBundle:
    intro = (
        "You write X language function class models. A function class is:\n"
        "  function <Name>\n"
        "  parameter:\n"
        "    <DataType> <arg>;\n"
        "  body:\n"
        "    <local> = <expr>;\n"
        "    return <expr>;\n"
        "  end;\n"
        "Output only the function class code."
    )
    messages = [
        PromptMessage(Role.USER, Label.INTRODUCTION, intro),
        PromptMessage(Role.USER, Label.INPUT, caller_text),
        PromptMessage(
            Role.USER,
            Label.TASK,
            f"The model above calls the undefined function `{symbol}`. Generate "
            f"the function class model of X language named `{symbol}` that it needs.",
        ),
    ]
    if notes:
        messages.append(PromptMessage(Role.USER, Label.NOTE, "\n".join(notes)))
    return PromptBundle(tuple(messages))


def build_port_type_prompt(part: str, port: str, description: str) -> PromptBundle:
    return PromptBundle(
        (
            PromptMessage(
                Role.USER,
                Label.INTRODUCTION,
                "Reason the value type a port carries. Answer with exactly one "
                "of: Real, Int, Bool, String.",
            ),
            PromptMessage(Role.USER, Label.INPUT, description),
            PromptMessage(Role.USER, Label.TASK, f"Type of port `{port}` on part `{part}`?"),
        )
    )
