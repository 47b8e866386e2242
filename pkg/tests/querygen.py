"""Hypothesis strategy producing random query text within the supported grammar."""

from hypothesis import strategies as st

SCIENCE_VOCAB = {
    "labels": ["theory", "scientist", "year", "field", "topic"],
    "rels": ["developer", "born in", "influenced_by", "field", "about", "inv_developer"],
    "props": ["name", "id", "year", "nationality"],
}


def _name(draw, pool):
    return draw(st.sampled_from(pool))


def _quote(name: str) -> str:
    return name if name.replace("_", "a").isalnum() and not name[0].isdigit() else f"`{name}`"


@st.composite
def literal(draw):
    kind = draw(st.sampled_from(["int", "float", "str"]))
    if kind == "int":
        return str(draw(st.integers(-5, 3000)))
    if kind == "float":
        return repr(draw(st.floats(0, 100, allow_nan=False, allow_infinity=False).map(lambda x: round(x, 2))))
    text = draw(st.text(alphabet="abcXYZ 19'", max_size=6))
    return "'" + text.replace("\\", "\\\\").replace("'", "\\'") + "'"


@st.composite
def node(draw, var, vocab):
    parts = var
    if draw(st.booleans()):
        parts += ":" + _quote(_name(draw, vocab["labels"]))
    if draw(st.integers(0, 3)) == 0:
        parts += " {" + _quote(_name(draw, vocab["props"])) + ": " + draw(literal()) + "}"
    return f"({parts})"


@st.composite
def edge(draw, var, vocab, allow_var_length=True):
    inner = var
    if draw(st.booleans()):
        inner += ":" + _quote(_name(draw, vocab["rels"]))
    if allow_var_length and draw(st.integers(0, 4)) == 0:
        lo = draw(st.integers(1, 2))
        inner += draw(st.sampled_from(["*", f"*{lo}", f"*{lo}..{lo + draw(st.integers(0, 2))}"]))
    return f"-[{inner}]->"


@st.composite
def condition(draw, variables, vocab, depth=0):
    choice = draw(st.integers(0, 5 if depth < 2 else 2))
    if choice <= 2:
        var = draw(st.sampled_from(variables))
        op = draw(st.sampled_from(["=", "<>", "<", "<=", ">", ">="]))
        return f"{var}.{_quote(_name(draw, vocab['props']))} {op} {draw(literal())}"
    left = draw(condition(variables, vocab, depth + 1))
    if choice == 3:
        return f"NOT {left}"
    right = draw(condition(variables, vocab, depth + 1))
    joined = f"{left} {draw(st.sampled_from(['AND', 'OR']))} {right}"
    return f"({joined})" if draw(st.booleans()) else joined


@st.composite
def query(draw, vocab=SCIENCE_VOCAB):
    hops = draw(st.integers(0, 3))
    nodes = [f"n{i}" for i in range(hops + 1)]
    text = draw(node(nodes[0], vocab))
    rel_vars = []
    for i in range(hops):
        rv = f"r{i}" if draw(st.booleans()) else ""
        if rv:
            rel_vars.append(rv)
        text += draw(edge(rv, vocab, allow_var_length=not rv)) + draw(node(nodes[i + 1], vocab))
    out = f"MATCH {text}"
    if draw(st.booleans()):
        out += " WHERE " + draw(condition(nodes, vocab))
    items = draw(st.lists(st.sampled_from(nodes + rel_vars + [f"{n}.name" for n in nodes]),
                          min_size=1, max_size=3, unique=True))
    distinct = "DISTINCT " if draw(st.booleans()) else ""
    if draw(st.integers(0, 3)) == 0:
        items = [items[0], f"COUNT({nodes[-1]}) AS c"]
    out += f" RETURN {distinct}" + ", ".join(items)
    if draw(st.booleans()):
        out += f" ORDER BY {items[0].split(' AS ')[0]}" + draw(st.sampled_from(["", " ASC", " DESC"]))
    if draw(st.booleans()):
        out += f" LIMIT {draw(st.integers(0, 20))}"
    return out
