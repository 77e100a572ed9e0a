"""Deterministic synthetic 5-language demo corpus for desk-scale runs."""
from __future__ import annotations

import random

from .corpus import Corpus, Snippet

MINI_LANGS = ("Bash", "C", "JavaScript", "Python", "SQL")

_IDENTS = [
    "total", "value", "result", "count", "items", "data", "buf", "index",
    "name", "flag", "score", "queue", "node", "temp", "user", "price",
]

_PY_TEMPLATES = [
    "def {f}({a}, {b}):\n    return {a} + {b} * {n}",
    "for {a} in range({n}):\n    print({a} * {m})",
    "class {F}:\n    def __init__(self, {a}):\n        self.{a} = {a}",
    "import os\n\nif os.path.exists('{s}.txt'):\n    print('{s}')",
    "{a} = [{n}, {m}, {n2}]\n{b} = sum(x * 2 for x in {a})",
    "try:\n    {a} = int('{n}')\nexcept ValueError:\n    {a} = {m}",
    "with open('{s}.log') as fh:\n    for line in fh:\n        print(line.strip())",
    "def {f}({a}):\n    if {a} is None:\n        return []\n    return sorted({a})",
    "{a} = {{'{s}': {n}, 'size': {m}}}\nprint({a}.get('{s}'))",
    "lambda_fn = lambda {a}: {a} ** {m}\nprint(lambda_fn({n}))",
]

_JS_TEMPLATES = [
    "function {f}({a}, {b}) {{\n  return {a} + {b} * {n};\n}}",
    "const {a} = [{n}, {m}, {n2}];\nconst {b} = {a}.map(x => x * 2);",
    "let {a} = {n};\nif ({a} > {m}) {{\n  console.log('{s}');\n}}",
    "document.getElementById('{s}').addEventListener('click', () => {{\n  {f}({n});\n}});",
    "const {a} = {{ {b}: {n}, label: '{s}' }};\nconsole.log(JSON.stringify({a}));",
    "async function {f}() {{\n  const res = await fetch('/api/{s}');\n  return res.json();\n}}",
    "var {a} = {n};\nwhile ({a}--) {{\n  console.log({a});\n}}",
    "export const {f} = ({a}) => {a}.filter(x => x !== {n});",
    "setTimeout(function () {{\n  console.log('{s}');\n}}, {n}00);",
]

_C_TEMPLATES = [
    "#include <stdio.h>\n\nint main(void) {{\n    printf(\"%d\\n\", {n} + {m});\n    return 0;\n}}",
    "int {f}(int {a}, int {b}) {{\n    return {a} * {b} + {n};\n}}",
    "for (int {a} = 0; {a} < {n}; {a}++) {{\n    sum += {a};\n}}",
    "struct {F} {{\n    int {a};\n    char {b}[{n}];\n}};",
    "char *{a} = malloc({n} * sizeof(char));\nif ({a} == NULL) return 1;\nfree({a});",
    "#include <string.h>\n\nsize_t {f}(const char *{a}) {{\n    return strlen({a}) + {n};\n}}",
    "int {a}[{n}];\nmemset({a}, 0, sizeof({a}));",
    "while (scanf(\"%d\", &{a}) == 1) {{\n    total += {a};\n}}",
    "void {f}(int *{a}) {{\n    *{a} = {n};\n}}",
]

_SQL_TEMPLATES = [
    "SELECT {a}, {b} FROM {s} WHERE {a} > {n};",
    "INSERT INTO {s} ({a}, {b}) VALUES ({n}, '{s2}');",
    "UPDATE {s} SET {a} = {n} WHERE {b} = '{s2}';",
    "SELECT COUNT(*) FROM {s} GROUP BY {a} HAVING COUNT(*) > {m};",
    "DELETE FROM {s} WHERE {a} < {n};",
    "CREATE TABLE {s} (\n  id INTEGER PRIMARY KEY,\n  {a} TEXT NOT NULL,\n  {b} INTEGER DEFAULT {n}\n);",
    "SELECT t.{a}, u.{b} FROM {s} t JOIN {s2} u ON t.id = u.{a}_id LIMIT {n};",
    "SELECT DISTINCT {a} FROM {s} ORDER BY {b} DESC;",
    "ALTER TABLE {s} ADD COLUMN {a} VARCHAR({n});",
]

_BASH_TEMPLATES = [
    "#!/bin/bash\nfor {a} in $(seq 1 {n}); do\n  echo \"${a}\"\ndone",
    "if [ -f \"{s}.txt\" ]; then\n  cat \"{s}.txt\" | wc -l\nfi",
    "{a}={n}\nwhile [ ${a} -gt 0 ]; do\n  {a}=$(({a} - 1))\ndone",
    "grep -r '{s}' . | cut -d: -f1 | sort -u",
    "function {f}() {{\n  local {a}=$1\n  echo \"${a}\" >> {s}.log\n}}",
    "find /tmp -name '*.{s}' -mtime +{n} -delete",
    "export PATH=\"$HOME/bin:$PATH\"\n{f} --input {s}.csv --limit {n}",
    "case \"${a}\" in\n  start) echo '{s}' ;;\n  stop) exit {m} ;;\nesac",
    "tar -czf {s}.tar.gz {s}/ && rm -rf {s}/",
]

_TEMPLATES = {
    "Bash": _BASH_TEMPLATES,
    "C": _C_TEMPLATES,
    "JavaScript": _JS_TEMPLATES,
    "Python": _PY_TEMPLATES,
    "SQL": _SQL_TEMPLATES,
}

_WORDS = ["orders", "users", "events", "config", "report", "backup", "cache", "items", "logs"]


def generate_mini_corpus(per_language: int = 320, seed: int = 7) -> Corpus:
    """Labeled synthetic snippets, deterministic for a given seed."""
    rng = random.Random(seed)
    snippets = []
    for lang in MINI_LANGS:
        templates = _TEMPLATES[lang]
        for i in range(per_language):
            template = templates[i % len(templates)]
            a, b = rng.sample(_IDENTS, 2)
            text = template.format(
                a=a,
                b=b,
                f=rng.choice(["compute", "process", "handle", "load", "update"]) + "_" + a,
                F=a.capitalize() + "Record",
                s=rng.choice(_WORDS),
                s2=rng.choice(_WORDS),
                n=rng.randint(2, 99),
                m=rng.randint(2, 9),
                n2=rng.randint(100, 999),
            )
            snippets.append(Snippet(text, lang))
    return Corpus.from_snippets(snippets)
