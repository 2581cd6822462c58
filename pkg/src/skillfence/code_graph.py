"""Code-layer graph construction.

Python scripts are parsed to an AST; calls matching an operation table (file,
network, process, environment primitives) become action nodes, branch and loop
conditions become predicate nodes, and assignments drive a lightweight
intra-procedural dataflow. Shell scripts are handled at pipeline/command
granularity only. Scripts that fail to parse collapse to a single opaque node
flagged ``unparsed`` rather than aborting the pipeline.
"""

from __future__ import annotations

import ast
import re

from .bundle import Provenance, ScriptArtifact
from .graph import (
    EDGE_CTRL,
    EDGE_DATA,
    KIND_ACTION,
    KIND_ENTRY,
    KIND_EXIT,
    KIND_PREDICATE,
    LAYER_CODE,
    ActionNode,
    Edge,
    PredicateNode,
    StructuralNode,
    UnifiedGraph,
    node_id,
)
from . import slots

Head = tuple[str, "str | None"]

# dotted call name -> op; obj defaults to the first positional argument
_PY_CALL_OPS: dict[str, str] = {
    "open": "read",  # switched to write when the mode argument says so
    "requests.get": "receive",
    "requests.post": "send",
    "requests.put": "send",
    "requests.patch": "send",
    "requests.delete": "send",
    "urllib.request.urlopen": "receive",
    "subprocess.run": "exec",
    "subprocess.call": "exec",
    "subprocess.check_call": "exec",
    "subprocess.check_output": "exec",
    "subprocess.Popen": "exec",
    "os.system": "exec",
    "os.popen": "exec",
    "os.remove": "delete",
    "os.unlink": "delete",
    "os.rmdir": "delete",
    "shutil.rmtree": "delete",
    "shutil.copy": "write",
    "shutil.copyfile": "write",
    "shutil.copy2": "write",
    "shutil.move": "write",
    "os.getenv": "collect",
    "os.environ.get": "collect",
    "os.listdir": "collect",
    "os.walk": "collect",
    "glob.glob": "collect",
}

# attribute-call last segments that imply an op regardless of receiver
_ATTR_VERBS: dict[str, str] = {
    "send": "send", "sendall": "send", "sendto": "send", "upload": "send",
    "publish": "send", "submit": "send", "post": "send",
    "download": "receive",
    "read_text": "read", "read_bytes": "read",
    "write_text": "write", "write_bytes": "write",
    "unlink": "delete",
}

_SH_CMD_OPS: dict[str, str] = {
    "cat": "read", "head": "read", "tail": "read", "less": "read",
    "more": "read", "grep": "read", "ls": "read", "git": "read",
    "curl": "receive", "wget": "receive",
    "scp": "send", "rsync": "send", "sftp": "send", "nc": "send",
    "rm": "delete",
    "cp": "write", "mv": "write", "tee": "write", "touch": "write",
    "mkdir": "write",
    "find": "collect", "tar": "collect", "zip": "collect", "gzip": "collect",
    "ssh": "exec", "eval": "exec", "sudo": "exec", "sh": "exec",
    "bash": "exec", "zsh": "exec", "python": "exec", "python3": "exec",
    "node": "exec", "ruby": "exec", "perl": "exec",
}

_SH_SKIP = frozenset({
    "export", "cd", "set", "source", "true", ":", "exit", "pwd", "sleep",
    "echo", "printf", "shift", "read", "local", "return",
    "if", "then", "else", "elif", "fi", "for", "while", "do", "done",
    "case", "esac", "function",
})

_SH_UPLOAD_FLAGS = ("-d", "--data", "--data-binary", "-F", "--form", "-T",
                    "--upload-file")
_URL_TOKEN_RE = re.compile(r"https?://\S+", re.I)


def _dotted_name(node: ast.expr) -> str | None:
    if isinstance(node, ast.Name):
        return node.id
    if isinstance(node, ast.Attribute):
        base = _dotted_name(node.value)
        return f"{base}.{node.attr}" if base else node.attr
    return None


class _PyBuilder:
    def __init__(self, script: ScriptArtifact) -> None:
        self.script = script
        self.artifact = f"script:{script.relative_path}"
        self.source = script.source
        self.nodes: dict[str, object] = {}
        self.edges: list[Edge] = []
        self.var_producer: dict[str, str] = {}
        self.fn_regions: dict[str, tuple[str | None, list[Head]]] = {}
        self._line_starts = [0]
        for line in self.source.split("\n")[:-1]:
            self._line_starts.append(self._line_starts[-1] + len(line) + 1)

    def _pos(self, lineno: int, col: int) -> int:
        line_start = self._line_starts[lineno - 1]
        line = self.source[line_start:].split("\n", 1)[0]
        return line_start + len(line.encode("utf-8")[:col].decode("utf-8", "ignore"))

    def _span(self, node: ast.AST) -> tuple[int, int]:
        start = self._pos(node.lineno, node.col_offset)
        end = self._pos(node.end_lineno, node.end_col_offset)
        return start, end

    def _segment(self, node: ast.AST, limit: int = 80) -> str:
        lo, hi = self._span(node)
        return self.source[lo:hi][:limit]

    def _provenance(self, node: ast.AST) -> Provenance:
        lo, hi = self._span(node)
        return Provenance(self.artifact, (lo, hi), self.source[lo:hi])

    # -- op extraction ---------------------------------------------------------

    def _call_op(self, call: ast.Call) -> str | None:
        name = _dotted_name(call.func)
        if name is None:
            return None
        if name in self.fn_regions:
            return None  # spliced as control flow instead
        if name in _PY_CALL_OPS:
            op = _PY_CALL_OPS[name]
            if name == "open":
                mode = ""
                if len(call.args) > 1 and isinstance(call.args[1], ast.Constant):
                    mode = str(call.args[1].value)
                for kw in call.keywords:
                    if kw.arg == "mode" and isinstance(kw.value, ast.Constant):
                        mode = str(kw.value.value)
                if any(c in mode for c in "wax"):
                    op = "write"
            if name == "urllib.request.urlopen":
                if len(call.args) > 1 or any(kw.arg == "data" for kw in call.keywords):
                    op = "send"
            return op
        last = name.rsplit(".", 1)[-1]
        if isinstance(call.func, ast.Attribute):
            if last in _ATTR_VERBS:
                return _ATTR_VERBS[last]
            first_tok = last.split("_")[0]
            if first_tok in _ATTR_VERBS:
                return _ATTR_VERBS[first_tok]
            return None
        canon = slots.canonical_verb(last.split("_")[0])
        return canon

    def _call_obj(self, call: ast.Call) -> tuple[str, str, str]:
        """(obj, obj_phrase, head_obj) for an op call."""
        name = _dotted_name(call.func) or ""
        if name in ("os.getenv", "os.environ.get") and call.args:
            arg = call.args[0]
            label = arg.value if isinstance(arg, ast.Constant) else self._segment(arg)
            phrase = f"env {label}"
            return re.sub(r"\W+", "_", phrase.lower()).strip("_"), phrase, "env"
        if call.args:
            arg = call.args[0]
            if isinstance(arg, ast.Constant) and isinstance(arg.value, str):
                phrase = arg.value
            else:
                phrase = self._segment(arg)
        else:
            phrase = name
        obj = re.sub(r"\W+", "_", phrase.lower()).strip("_") or "value"
        head = slots.alnum_tokens(phrase)[-1] if slots.alnum_tokens(phrase) else obj
        head = slots.OBJ_CANON.get(head, head)
        return obj[:60], phrase[:80], head

    def _call_dest(self, call: ast.Call) -> str | None:
        for arg in list(call.args) + [kw.value for kw in call.keywords]:
            if isinstance(arg, ast.Constant) and isinstance(arg.value, str):
                text = arg.value
                if slots.is_endpoint_literal(text):
                    return slots.normalize_destination(text)
        return None

    def _collect_calls(self, node: ast.AST) -> list[ast.Call]:
        calls: list[ast.Call] = []

        def visit(n: ast.AST) -> None:
            if isinstance(n, ast.Call):
                for child in ast.iter_child_nodes(n):
                    visit(child)
                calls.append(n)  # inner calls first: evaluation order
                return
            if isinstance(n, (ast.FunctionDef, ast.AsyncFunctionDef, ast.Lambda)):
                return
            for child in ast.iter_child_nodes(n):
                visit(child)

        visit(node)
        return calls

    def _names_loaded(self, node: ast.AST) -> list[str]:
        out = []
        for n in ast.walk(node):
            if isinstance(n, ast.Name) and isinstance(n.ctx, ast.Load):
                out.append(n.id)
        return out

    def _emit_ops(self, stmt_expr: ast.AST, heads: list[Head],
                  region_first: list[str]) -> tuple[list[Head], str | None]:
        """Create op nodes for calls inside one expression, chained in order."""
        last_node: str | None = None
        made: list[tuple[ast.Call, str]] = []
        for call in self._collect_calls(stmt_expr):
            op = self._call_op(call)
            if op is None:
                continue
            lo, hi = self._span(call)
            nid = node_id(self.artifact, KIND_ACTION, lo, hi)
            if nid in self.nodes:
                continue
            obj, phrase, head_obj = self._call_obj(call)
            node = ActionNode(
                id=nid,
                layer=LAYER_CODE,
                op=op if op in slots.CANONICAL_OPS else f"other({op})",
                obj=obj,
                src=self._provenance(call),
                raw_verb=(_dotted_name(call.func) or op).rsplit(".", 1)[-1],
                obj_phrase=phrase,
                head_obj=head_obj,
                dest=self._call_dest(call),
            )
            self.nodes[nid] = node
            if region_first is not None and not region_first:
                region_first.append(nid)
            for src, label in heads:
                self.edges.append(Edge(EDGE_CTRL, src, nid, label))
            heads = [(nid, None)]
            # dataflow: variables read by this call
            for name in self._names_loaded(call):
                producer = self.var_producer.get(name)
                if producer and producer != nid:
                    self.edges.append(Edge(EDGE_DATA, producer, nid, name))
            # dataflow: nested producer calls feeding this one
            for prev_call, prev_id in made:
                if prev_id != nid and any(prev_call is c for c in ast.walk(call)):
                    self.edges.append(Edge(EDGE_DATA, prev_id, nid, None))
            made.append((call, nid))
            last_node = nid
        return heads, last_node

    def _splice_local_calls(self, stmt_expr: ast.AST, heads: list[Head],
                            region_first: list[str]) -> list[Head]:
        for call in self._collect_calls(stmt_expr):
            name = _dotted_name(call.func)
            if name in self.fn_regions:
                first, tails = self.fn_regions[name]
                if first is None:
                    continue
                if region_first is not None and not region_first:
                    region_first.append(first)
                for src, label in heads:
                    self.edges.append(Edge(EDGE_CTRL, src, first, label))
                heads = list(tails)
        return heads

    def _walk(self, stmts: list[ast.stmt], heads: list[Head],
              region_first: list[str], region_exits: list[Head]) -> list[Head]:
        for stmt in stmts:
            if isinstance(stmt, (ast.FunctionDef, ast.AsyncFunctionDef)):
                first: list[str] = []
                exits: list[Head] = []
                tails = self._walk(stmt.body, [], first, exits)
                self.fn_regions[stmt.name] = (
                    first[0] if first else None,
                    tails + exits,
                )
                continue
            if isinstance(stmt, ast.Return):
                if stmt.value is not None:
                    heads, _ = self._emit_ops(stmt.value, heads, region_first)
                region_exits.extend(heads)
                heads = []
                continue
            if isinstance(stmt, ast.If):
                pid = self._predicate(stmt.test, heads, region_first)
                body_tails = self._walk(stmt.body, [(pid, "true")], region_first, region_exits)
                if stmt.orelse:
                    else_tails = self._walk(stmt.orelse, [(pid, "false")], region_first, region_exits)
                    heads = body_tails + else_tails
                else:
                    heads = body_tails + [(pid, "false")]
                continue
            if isinstance(stmt, (ast.While, ast.For)):
                test = stmt.test if isinstance(stmt, ast.While) else stmt.iter
                pid = self._predicate(test, heads, region_first)
                body_tails = self._walk(stmt.body, [(pid, "true")], region_first, region_exits)
                for src, label in body_tails:
                    if src != pid:
                        self.edges.append(Edge(EDGE_CTRL, src, pid, label))
                heads = [(pid, "false")]
                continue
            if isinstance(stmt, (ast.Try,)):
                heads = self._walk(stmt.body, heads, region_first, region_exits)
                heads = self._walk(stmt.finalbody, heads, region_first, region_exits)
                continue
            if isinstance(stmt, ast.With):
                for item in stmt.items:
                    heads, _ = self._emit_ops(item.context_expr, heads, region_first)
                heads = self._walk(stmt.body, heads, region_first, region_exits)
                continue
            if isinstance(stmt, (ast.Assign, ast.AnnAssign, ast.AugAssign)):
                value = stmt.value
                if value is None:
                    continue
                heads, last = self._emit_ops(value, heads, region_first)
                heads = self._splice_local_calls(value, heads, region_first)
                targets = []
                if isinstance(stmt, ast.Assign):
                    targets = stmt.targets
                elif stmt.target is not None:
                    targets = [stmt.target]
                if last is not None:
                    for t in targets:
                        if isinstance(t, ast.Name):
                            self.var_producer[t.id] = last
                continue
            if isinstance(stmt, ast.Expr):
                heads, _ = self._emit_ops(stmt.value, heads, region_first)
                heads = self._splice_local_calls(stmt.value, heads, region_first)
                continue
            # other statements: no operational content at this granularity
        return heads

    def _predicate(self, test: ast.expr, heads: list[Head],
                   region_first: list[str]) -> str:
        lo, hi = self._span(test)
        pid = node_id(self.artifact, KIND_PREDICATE, lo, hi)
        if pid not in self.nodes:
            phi = " ".join(self.source[lo:hi].split()).lower()
            self.nodes[pid] = PredicateNode(pid, LAYER_CODE, phi, self._provenance(test))
        if region_first is not None and not region_first:
            region_first.append(pid)
        for src, label in heads:
            if src != pid:
                self.edges.append(Edge(EDGE_CTRL, src, pid, label))
        return pid

    def build(self) -> UnifiedGraph:
        entry = StructuralNode(
            node_id(self.artifact, KIND_ENTRY, 0, 0), LAYER_CODE, KIND_ENTRY, self.artifact
        )
        exit_node = StructuralNode(
            node_id(self.artifact, KIND_EXIT, 0, 0), LAYER_CODE, KIND_EXIT, self.artifact
        )
        self.nodes[entry.id] = entry
        self.nodes[exit_node.id] = exit_node
        try:
            tree = ast.parse(self.source)
        except SyntaxError:
            excerpt_hi = min(len(self.source), 80)
            nid = node_id(self.artifact, KIND_ACTION, 0, excerpt_hi)
            opaque = ActionNode(
                id=nid,
                layer=LAYER_CODE,
                op="other(unparsed)",
                obj=self.script.relative_path,
                src=Provenance(self.artifact, (0, excerpt_hi), self.source[:excerpt_hi]),
                raw_verb="unparsed",
                obj_phrase=self.script.relative_path,
                head_obj="script",
                unparsed=True,
            )
            self.nodes[nid] = opaque
            self.edges.append(Edge(EDGE_CTRL, entry.id, nid, None))
            self.edges.append(Edge(EDGE_CTRL, nid, exit_node.id, None))
            g = UnifiedGraph(self.nodes, self.edges, entry.id, {exit_node.id})
            g.diagnostics.append(f"parse failure: {self.script.relative_path}")
            return g
        region_exits: list[Head] = []
        tails = self._walk(tree.body, [(entry.id, None)], None, region_exits)
        for src, label in tails + region_exits:
            self.edges.append(Edge(EDGE_CTRL, src, exit_node.id, label))
        return UnifiedGraph(self.nodes, self.edges, entry.id, {exit_node.id})


class _ShellBuilder:
    def __init__(self, script: ScriptArtifact) -> None:
        self.script = script
        self.artifact = f"script:{script.relative_path}"
        self.source = script.source
        self.nodes: dict[str, object] = {}
        self.edges: list[Edge] = []

    def _make_node(self, lo: int, hi: int, op: str, obj_phrase: str,
                   dest: str | None, raw_verb: str = "") -> str:
        nid = node_id(self.artifact, KIND_ACTION, lo, hi)
        if nid in self.nodes:
            return nid
        obj = re.sub(r"\W+", "_", obj_phrase.lower()).strip("_") or "command"
        toks = slots.alnum_tokens(obj_phrase)
        head = slots.OBJ_CANON.get(toks[-1], toks[-1]) if toks else obj
        if op in slots.CANONICAL_OPS or op.startswith("other("):
            op_str = op
        else:
            op_str = f"other({op})"
        self.nodes[nid] = ActionNode(
            id=nid,
            layer=LAYER_CODE,
            op=op_str,
            obj=obj[:60],
            src=Provenance(self.artifact, (lo, hi), self.source[lo:hi]),
            raw_verb=raw_verb or (op if op in slots.CANONICAL_OPS else "command"),
            obj_phrase=obj_phrase[:80],
            head_obj=head,
            dest=dest,
        )
        return nid

    def _command_op(self, cmd: str) -> str | None:
        words = cmd.split()
        if not words:
            return None
        first = words[0].rsplit("/", 1)[-1]
        if first in _SH_SKIP:
            return None
        if first in ("curl", "wget"):
            if any(f in words for f in _SH_UPLOAD_FLAGS) or "POST" in words or "PUT" in words:
                return "send"
            return _SH_CMD_OPS[first]
        if first in _SH_CMD_OPS:
            return _SH_CMD_OPS[first]
        canon = slots.canonical_verb(first)
        return canon if canon is not None else f"other({first})"

    def build(self) -> UnifiedGraph:
        entry = StructuralNode(
            node_id(self.artifact, KIND_ENTRY, 0, 0), LAYER_CODE, KIND_ENTRY, self.artifact
        )
        exit_node = StructuralNode(
            node_id(self.artifact, KIND_EXIT, 0, 0), LAYER_CODE, KIND_EXIT, self.artifact
        )
        self.nodes[entry.id] = entry
        self.nodes[exit_node.id] = exit_node
        heads: list[Head] = [(entry.id, None)]
        offset = 0
        for line in self.source.split("\n"):
            lo = offset
            offset += len(line) + 1
            stripped = line.strip()
            if not stripped or stripped.startswith("#") or stripped.startswith("#!"):
                continue
            # sequential separators first, pipelines within each part
            pos = lo + line.index(stripped[0])
            for part in re.split(r"&&|;", stripped):
                prev_pipe: str | None = None
                for seg in part.split("|"):
                    cmd = seg.strip()
                    if not cmd:
                        continue
                    seg_lo = self.source.index(cmd, pos)
                    seg_hi = seg_lo + len(cmd)
                    pos = seg_hi
                    redirect = None
                    rm = re.search(r">{1,2}\s*(\S+)\s*$", cmd)
                    cmd_body = cmd
                    if rm:
                        redirect = rm.group(1)
                        cmd_body = cmd[: rm.start()].strip()
                    op = self._command_op(cmd_body)
                    nid = None
                    if op is not None:
                        args = [w for w in cmd_body.split()[1:] if not w.startswith("-")]
                        obj_phrase = " ".join(args) if args else cmd_body
                        url = _URL_TOKEN_RE.search(cmd_body)
                        dest = slots.normalize_destination(url.group(0)) if url else None
                        if op == "exec":
                            obj_phrase = cmd_body
                        raw_verb = cmd_body.split()[0] if cmd_body.split() else op
                        nid = self._make_node(seg_lo, seg_hi, op, obj_phrase, dest, raw_verb)
                        for src, label in heads:
                            if src != nid:
                                self.edges.append(Edge(EDGE_CTRL, src, nid, label))
                        heads = [(nid, None)]
                        if prev_pipe and prev_pipe != nid:
                            self.edges.append(Edge(EDGE_DATA, prev_pipe, nid, "pipe"))
                        prev_pipe = nid
                    if redirect:
                        wid = self._make_node(seg_lo, seg_hi, "write", redirect, None)
                        if wid != (nid or ""):
                            for src, label in heads:
                                if src != wid:
                                    self.edges.append(Edge(EDGE_CTRL, src, wid, label))
                            heads = [(wid, None)]
                            if nid and nid != wid:
                                self.edges.append(Edge(EDGE_DATA, nid, wid, "pipe"))
        for src, label in heads:
            self.edges.append(Edge(EDGE_CTRL, src, exit_node.id, label))
        return UnifiedGraph(self.nodes, self.edges, entry.id, {exit_node.id})


def build_code_graph(script: ScriptArtifact) -> UnifiedGraph:
    """Per-script partial graph with one synthetic entry and exit node."""
    artifact = f"script:{script.relative_path}"
    if script.language_hint == "python":
        return _PyBuilder(script).build()
    if script.language_hint == "shell":
        return _ShellBuilder(script).build()
    entry = StructuralNode(node_id(artifact, KIND_ENTRY, 0, 0), LAYER_CODE, KIND_ENTRY, artifact)
    exit_node = StructuralNode(node_id(artifact, KIND_EXIT, 0, 0), LAYER_CODE, KIND_EXIT, artifact)
    nodes: dict[str, object] = {entry.id: entry, exit_node.id: exit_node}
    edges = [Edge(EDGE_CTRL, entry.id, exit_node.id, None)]
    if script.source:
        hi = min(len(script.source), 80)
        nid = node_id(artifact, KIND_ACTION, 0, hi)
        nodes[nid] = ActionNode(
            id=nid,
            layer=LAYER_CODE,
            op="other(opaque)",
            obj=script.relative_path,
            src=Provenance(artifact, (0, hi), script.source[:hi]),
            raw_verb="opaque",
            obj_phrase=script.relative_path,
            head_obj="script",
        )
        edges = [
            Edge(EDGE_CTRL, entry.id, nid, None),
            Edge(EDGE_CTRL, nid, exit_node.id, None),
        ]
    return UnifiedGraph(nodes, edges, entry.id, {exit_node.id})
