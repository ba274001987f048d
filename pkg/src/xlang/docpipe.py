"""Front half of the generation pipeline: sentence splitting, token
tagging and sentence classification through pluggable backends, corpus
slicing, and aggregation of containment relations into a composition tree.

The rule-based tagger/classifier is always available and recall-first;
fine-tuned neural backends plug in over a small HTTP JSON protocol."""

from __future__ import annotations

import re
from dataclasses import dataclass, field
from enum import Enum

import httpx

from .diagnostics import BackendUnavailable, Diagnostic, XlangError, warning

# token tag values: 0 other, 1 parent system, 2 subsystem
TAG_OTHER, TAG_PARENT, TAG_SUBSYSTEM = 0, 1, 2

DEFAULT_GUARDS = ("e.g.", "i.e.", "etc.", "Fig.", "No.", "vs.", "Eq.")

_WORD_RE = re.compile(r"\w+|[^\w\s]")
_ARTICLES = {"the", "a", "an"}

CONTAINMENT_PATTERNS = (
    ("is", "composed", "of"),
    ("is", "comprised", "of"),
    ("consists", "of"),
    ("comprises",),
    ("contains",),
)

CONNECTION_WORDS = frozenset(
    """connects connected sends transmits receives feeds supplies provides
    delivers powers controls routes commands signals drives""".split()
)


class SentenceClass(str, Enum):
    CONTAINMENT = "Containment"
    CONNECTION_DESC = "ConnectionDesc"
    IRRELEVANT = "Irrelevant"


@dataclass(frozen=True)
class TokenTag:
    text: str
    start: int  # character offset within the sentence
    end: int
    tag: int


@dataclass
class TaggedSentence:
    sid: int
    text: str
    tokens: list[TokenTag]
    classes: set[SentenceClass]

    def spans(self, tag: int) -> list[str]:
        """Maximal runs of same-tag tokens, joined with single spaces."""
        runs: list[list[str]] = []
        previous_tagged = False
        for token in self.tokens:
            if token.tag == tag:
                if previous_tagged:
                    runs[-1].append(token.text)
                else:
                    runs.append([token.text])
                previous_tagged = True
            else:
                previous_tagged = False
        return [" ".join(r) for r in runs]


class NoRelations(XlangError):
    """No sentence carried both a parent and a subsystem span."""


class CycleDetected(XlangError):
    def __init__(self, path: list[str]):
        self.path = path
        super().__init__(" -> ".join(path))


class EditError(XlangError):
    pass


def normalize_name(name: str) -> str:
    return " ".join(name.casefold().split())


def normalize_ident(name: str) -> str:
    """Identifier identity across spellings: case, underscores, camel-case
    boundaries, and whitespace are all equivalent."""
    return re.sub(r"[\s_]+", "", name).lower()


def strip_markdown(text: str) -> str:
    """Best-effort markup removal so markdown documents read as plain text."""
    text = re.sub(r"```.*?```", " ", text, flags=re.S)
    text = re.sub(r"^#{1,6}\s*", "", text, flags=re.M)
    text = re.sub(r"\[([^\]]*)\]\([^)]*\)", r"\1", text)
    text = re.sub(r"[*_`]{1,3}([^*_`]*)[*_`]{1,3}", r"\1", text)
    return text


def _guard_pattern(guard: str) -> re.Pattern:
    # whitespace-insensitive: a period inside a guard may be followed by
    # spaces in the document ("A.B." also matches "A. B.")
    pattern = re.escape(guard).replace(r"\.", r"\.\s*").replace(r"\ ", r"\s+")
    return re.compile(pattern)


def split_sentences(document: str, guards: tuple[str, ...] = DEFAULT_GUARDS) -> list[str]:
    """Deterministic sentence split; segments concatenate back to the
    document exactly (each sentence keeps its trailing separator)."""
    if not document:
        return []
    suppressed: set[int] = set()
    for guard in guards:
        for m in _guard_pattern(guard).finditer(document):
            suppressed.update(range(m.start(), m.end()))

    pieces: list[str] = []
    start = 0
    i = 0
    n = len(document)
    while i < n:
        ch = document[i]
        if ch in ".!?" and i not in suppressed:
            j = i + 1
            while j < n and document[j] in "\"')":
                j += 1
            k = j
            while k < n and document[k] in " \t\r\n":
                k += 1
            if k == n or ((k > j) and (document[k].isupper() or document[k].isdigit())):
                pieces.append(document[start:k])
                start = k
                i = k
                continue
        i += 1
    if start < n:
        pieces.append(document[start:])
    return pieces


def tokenize_sentence(sentence: str) -> list[tuple[str, int, int]]:
    return [(m.group(0), m.start(), m.end()) for m in _WORD_RE.finditer(sentence)]


class RuleTagger:
    """Containment-verb tagger: subject tokens -> 1, listed noun phrases -> 2.

    Recall-first by construction: every containment verb in the lexicon
    produces a parent span and the full comma/and list after it.
    """

    def tag(self, sentences: list[str]) -> list[list[TokenTag]]:
        return [self._tag_one(s) for s in sentences]

    def _tag_one(self, sentence: str) -> list[TokenTag]:
        raw = tokenize_sentence(sentence)
        words = [t[0].lower() for t in raw]
        tags = [TAG_OTHER] * len(raw)

        verb_at = self._find_pattern(words)
        if verb_at is not None:
            begin, after = verb_at
            # subject: tokens before the verb; articles and punctuation out,
            # unless the article is the only candidate ("A contains B.")
            candidates = [i for i in range(begin) if raw[i][0][0].isalnum()]
            while len(candidates) > 1 and words[candidates[0]] in _ARTICLES:
                candidates.pop(0)
            for idx in candidates:
                if len(candidates) > 1 and words[idx] in _ARTICLES:
                    continue
                tags[idx] = TAG_PARENT
            self._tag_listed_items(raw, words, after, tags)
        return [TokenTag(t, s, e, tag) for (t, s, e), tag in zip(raw, tags)]

    @staticmethod
    def _find_pattern(words: list[str]):
        for pattern in CONTAINMENT_PATTERNS:
            for i in range(len(words) - len(pattern) + 1):
                if tuple(words[i : i + len(pattern)]) == pattern:
                    return i, i + len(pattern)
        return None

    @staticmethod
    def _tag_listed_items(raw, words, start, tags):
        # a nearby colon introduces the actual list ("six components: ...")
        for idx in range(start, min(start + 6, len(raw))):
            if raw[idx][0] == ":":
                start = idx + 1
                break
        for idx in range(start, len(raw)):
            token = raw[idx][0]
            lower = words[idx]
            if token in (".", ";", ":"):
                break
            if token == "," or lower == "and":
                continue
            if lower in _ARTICLES:
                # an article only introduces an item when a word follows it
                nxt = idx + 1
                if nxt < len(raw) and raw[nxt][0][0].isalnum() and words[nxt] not in ("and",):
                    continue
            if not token[0].isalnum():
                continue
            if lower.isdigit():
                continue
            tags[idx] = TAG_SUBSYSTEM


class RuleClassifier:
    def classify(self, sentences: list[str]) -> list[set[SentenceClass]]:
        return [self._classify_one(s) for s in sentences]

    @staticmethod
    def _classify_one(sentence: str) -> set[SentenceClass]:
        words = [w.lower() for w in re.findall(r"\w+", sentence)]
        classes: set[SentenceClass] = set()
        if RuleTagger._find_pattern(words) is not None:
            classes.add(SentenceClass.CONTAINMENT)
        if any(w in CONNECTION_WORDS for w in words):
            classes.add(SentenceClass.CONNECTION_DESC)
        if not classes:
            classes.add(SentenceClass.IRRELEVANT)
        return classes


class HttpTagger:
    """`POST /tag {sentences: [...]} -> {tags: [[{start, end, tag}, ...]]}`"""

    def __init__(self, base_url: str, client: httpx.Client | None = None, timeout: float = 30.0):
        self.base_url = base_url.rstrip("/")
        self.client = client or httpx.Client(timeout=timeout)

    def tag(self, sentences: list[str]) -> list[list[TokenTag]]:
        try:
            response = self.client.post(f"{self.base_url}/tag", json={"sentences": sentences})
            response.raise_for_status()
        except httpx.HTTPError as exc:
            raise BackendUnavailable(f"tagger backend: {exc}") from exc
        payload = response.json()
        out: list[list[TokenTag]] = []
        for sentence, spans in zip(sentences, payload["tags"]):
            out.append(
                [TokenTag(sentence[s["start"] : s["end"]], s["start"], s["end"], int(s["tag"])) for s in spans]
            )
        return out


class HttpClassifier:
    """`POST /classify {sentences: [...]} -> {classes: [[...], ...]}`"""

    def __init__(self, base_url: str, client: httpx.Client | None = None, timeout: float = 30.0):
        self.base_url = base_url.rstrip("/")
        self.client = client or httpx.Client(timeout=timeout)

    def classify(self, sentences: list[str]) -> list[set[SentenceClass]]:
        try:
            response = self.client.post(f"{self.base_url}/classify", json={"sentences": sentences})
            response.raise_for_status()
        except httpx.HTTPError as exc:
            raise BackendUnavailable(f"classifier backend: {exc}") from exc
        payload = response.json()
        return [{SentenceClass(c) for c in row} for row in payload["classes"]]


def tag_tokens(sentence: str, backend=None, classifier=None, sid: int = 0) -> TaggedSentence:
    """Tag one sentence; the rule backend is the always-available default."""
    backend = backend or RuleTagger()
    classifier = classifier or RuleClassifier()
    tokens = backend.tag([sentence])[0]
    classes = classifier.classify([sentence])[0]
    return TaggedSentence(sid, sentence, tokens, classes)


def tag_document(
    sentences: list[str], backend=None, classifier=None, diagnostics: list[Diagnostic] | None = None
) -> list[TaggedSentence]:
    """Tag a sentence list, falling back to the rule backend on outage."""
    backend = backend or RuleTagger()
    classifier = classifier or RuleClassifier()
    texts = [s.strip() for s in sentences]
    try:
        token_rows = backend.tag(texts)
    except BackendUnavailable as exc:
        if diagnostics is not None:
            diagnostics.append(warning("docpipe/tagger-fallback", f"{exc}; using rule tagger"))
        token_rows = RuleTagger().tag(texts)
    try:
        class_rows = classifier.classify(texts)
    except BackendUnavailable as exc:
        if diagnostics is not None:
            diagnostics.append(warning("docpipe/classifier-fallback", f"{exc}; using rule classifier"))
        class_rows = RuleClassifier().classify(texts)
    return [
        TaggedSentence(i, text, tokens, classes)
        for i, (text, tokens, classes) in enumerate(zip(texts, token_rows, class_rows))
    ]


@dataclass
class ComponentNode:
    name: str
    children: list["ComponentNode"] = field(default_factory=list)
    provenance: list = field(default_factory=list)

    def walk(self):
        yield self
        for child in self.children:
            yield from child.walk()

    def child(self, normalized: str) -> "ComponentNode | None":
        for c in self.children:
            if normalize_name(c.name) == normalized:
                return c
        return None

    def to_dict(self) -> dict:
        return {
            "name": self.name,
            "children": [c.to_dict() for c in self.children],
            "provenance": list(self.provenance),
        }


@dataclass
class SystemComposition:
    root: ComponentNode
    diagnostics: list[Diagnostic] = field(default_factory=list)

    def to_dict(self) -> dict:
        return {"root": self.root.to_dict()}

    def find(self, path: str) -> ComponentNode:
        node = self.root
        parts = [p for p in path.split("/") if p]
        if not parts or normalize_name(parts[0]) != normalize_name(self.root.name):
            raise EditError(f"path {path!r} does not start at the root")
        for piece in parts[1:]:
            child = node.child(normalize_name(piece))
            if child is None:
                raise EditError(f"path {path!r}: no component {piece!r} under {node.name!r}")
            node = child
        return node


def build_composition(tagged: list[TaggedSentence]) -> SystemComposition:
    """Aggregate containment relations into one tree.

    Relations merge under case/whitespace-insensitive names; the display
    name is the lexicographically smallest observed spelling, and children
    sort by normalized name, so the tree is order-independent.
    """
    display: dict[str, str] = {}
    edges: dict[str, dict[str, set[int]]] = {}
    mentioned: set[str] = set()
    diagnostics: list[Diagnostic] = []

    def observe(raw: str) -> str:
        norm = normalize_name(raw)
        pretty = " ".join(raw.split())
        if norm not in display or pretty < display[norm]:
            display[norm] = pretty
        mentioned.add(norm)
        return norm

    for sentence in tagged:
        parents = sentence.spans(TAG_PARENT)
        children = sentence.spans(TAG_SUBSYSTEM)
        if not parents or not children:
            continue
        if len(parents) > 1:
            diagnostics.append(
                warning(
                    "docpipe/multiple-parents",
                    f"sentence {sentence.sid} tags several parent spans; using the first",
                )
            )
        parent = observe(parents[0])
        for child_raw in children:
            child = observe(child_raw)
            if child == parent:
                continue
            edges.setdefault(parent, {}).setdefault(child, set()).add(sentence.sid)

    if not edges:
        raise NoRelations("no containment relations were tagged")

    all_children = {c for kids in edges.values() for c in kids}
    roots = sorted(n for n in mentioned if n not in all_children and n in edges)
    if not roots:
        # every parent is also somebody's child: there must be a cycle
        _detect_cycles(edges, sorted(edges))

    if len(roots) > 1:
        synthetic = "system"
        diagnostics.append(
            warning("docpipe/multiple-roots", f"{len(roots)} roots found; joined under {synthetic!r}")
        )
        display[synthetic] = synthetic
        edges[synthetic] = {r: set() for r in roots}
        roots = [synthetic]

    _detect_cycles(edges, roots)

    def build(norm: str, provenance: set[int]) -> ComponentNode:
        kids = edges.get(norm, {})
        return ComponentNode(
            display[norm],
            [build(c, kids[c]) for c in sorted(kids)],
            sorted(provenance),
        )

    root_provenance = {sid for kids in edges.get(roots[0], {}).values() for sid in kids}
    return SystemComposition(build(roots[0], root_provenance), diagnostics)


def _detect_cycles(edges: dict[str, dict[str, set]], starts: list[str]):
    visiting: list[str] = []
    done: set[str] = set()

    def visit(node: str):
        if node in done:
            return
        if node in visiting:
            cycle = visiting[visiting.index(node) :] + [node]
            raise CycleDetected(cycle)
        visiting.append(node)
        for child in sorted(edges.get(node, {})):
            visit(child)
        visiting.pop()
        done.add(node)

    for start in starts:
        visit(start)
    for node in sorted(edges):
        visit(node)


def apply_edits(composition: SystemComposition, edits: list[dict]) -> SystemComposition:
    """Apply the manual-review edit file: [{op, path, name}] with ops
    add/remove/rename; paths are /-joined names from the root."""
    for i, edit in enumerate(edits):
        op = edit.get("op")
        path = edit.get("path", "")
        if op == "add":
            node = composition.find(path)
            name = edit.get("name")
            if not name:
                raise EditError(f"edit {i}: add needs a name")
            if node.child(normalize_name(name)) is None:
                node.children.append(ComponentNode(" ".join(name.split()), provenance=["manual"]))
                node.children.sort(key=lambda c: normalize_name(c.name))
        elif op == "remove":
            parent_path, _, leaf = path.rpartition("/")
            if not leaf:
                raise EditError(f"edit {i}: cannot remove the root")
            parent = composition.find(parent_path)
            child = parent.child(normalize_name(leaf))
            if child is None:
                raise EditError(f"edit {i}: no component {leaf!r} to remove")
            parent.children.remove(child)
        elif op == "rename":
            name = edit.get("name")
            if not name:
                raise EditError(f"edit {i}: rename needs a name")
            node = composition.find(path)
            node.name = " ".join(name.split())
            node.provenance = list(node.provenance) + ["manual"]
        else:
            raise EditError(f"edit {i}: unknown op {op!r}")
    return composition


@dataclass
class CorpusSlice:
    model_corpus: list[int]
    connection_corpus: list[int]
    component_corpora: dict[str, list[int]]

    def to_dict(self) -> dict:
        return {
            "model_corpus": self.model_corpus,
            "connection_corpus": self.connection_corpus,
            "component_corpora": self.component_corpora,
        }


def slice_corpus(tagged: list[TaggedSentence], composition: SystemComposition) -> CorpusSlice:
    """Drop redundant sentences, split out the connection corpus, and
    bucket sentences per mentioned component."""
    model: list[int] = []
    connection: list[int] = []
    component: dict[str, list[int]] = {
        normalize_name(node.name): [] for node in composition.root.walk()
    }
    for sentence in tagged:
        informative = any(t.tag != TAG_OTHER for t in sentence.tokens) or (
            sentence.classes - {SentenceClass.IRRELEVANT}
        )
        if not informative:
            continue
        model.append(sentence.sid)
        if SentenceClass.CONNECTION_DESC in sentence.classes:
            connection.append(sentence.sid)
        normalized_text = normalize_name(sentence.text)
        for name in component:
            if name in normalized_text:
                component[name].append(sentence.sid)
    return CorpusSlice(model, connection, component)


def camel_case(name: str) -> str:
    words = re.findall(r"[A-Za-z0-9]+", name)
    return "".join(w[:1].upper() + w[1:] for w in words) or "Component"


def snake_case(name: str) -> str:
    words = []
    for chunk in re.findall(r"[A-Za-z0-9]+", name):
        words.extend(re.sub(r"(?<=[a-z0-9])(?=[A-Z])", " ", chunk).split())
    return "_".join(w.lower() for w in words) or "component"


class NameMap:
    """Maps document component names to class and instance identifiers.

    The pipeline configuration may pin mappings (power supply -> Battery);
    anything unmapped falls back to CamelCase / snake_case derivation.
    """

    def __init__(self, classes: dict[str, str] | None = None, instances: dict[str, str] | None = None):
        self.classes = {normalize_name(k): v for k, v in (classes or {}).items()}
        self.instances = {normalize_name(k): v for k, v in (instances or {}).items()}

    def class_for(self, component_name: str) -> str:
        norm = normalize_name(component_name)
        return self.classes.get(norm) or camel_case(component_name)

    def instance_for(self, component_name: str) -> str:
        norm = normalize_name(component_name)
        if norm in self.instances:
            return self.instances[norm]
        return snake_case(self.classes.get(norm, component_name))
