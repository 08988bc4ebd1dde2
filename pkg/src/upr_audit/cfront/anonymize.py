"""Consistent renaming of user-defined identifiers, to test name sensitivity of raters."""

from __future__ import annotations

import hashlib
import json
import re
from dataclasses import dataclass
from typing import Iterable

from upr_audit.cfront.lower import MACRO_NAME
from upr_audit.cfront.parse import CSyntaxError, parse_unit
from upr_audit.cfront.source import SourceUnit

IDENTIFIER_NODES = ("identifier", "field_identifier", "type_identifier", "statement_identifier")

# Standard library names kept as-is unless rename_all is set.
STD_NAMES = frozenset("""
    scanf fscanf sscanf gets fgets fgetc getc getchar fread read recv recvfrom getline
    printf fprintf sprintf snprintf vprintf vfprintf vsnprintf puts fputs fputc putc putchar
    fwrite write send sendto perror fopen fclose fflush fseek ftell rewind open close
    access stat lstat fstat chdir chroot opendir readdir closedir unlink rename mkdir rmdir
    realpath readlink chmod fchmod chown fchown lchown umask
    setuid seteuid setgid setegid setreuid setregid setresuid setresgid getuid geteuid
    getgid getegid getpid getppid fork execv execve execvp execl execlp system popen pclose
    getpwnam getpwuid getgrnam getgrgid getspnam crypt initgroups setgroups getgroups
    malloc calloc realloc free memcpy memmove memset memcmp strcpy strncpy strcat strncat
    strcmp strncmp strcasecmp strncasecmp strlen strnlen strchr strrchr strstr strdup
    strndup strtok strtok_r strtol strtoul strtoll strtod atoi atol atof abs exit abort
    assert signal alarm sleep usleep time localtime gmtime strftime rand srand random
    isalpha isdigit isalnum isspace isupper islower toupper tolower syslog openlog closelog
    socket bind listen accept connect shutdown select poll htons htonl ntohs ntohl
    inet_ntoa inet_addr gethostbyname errno stdin stdout stderr
    size_t ssize_t off_t pid_t uid_t gid_t mode_t time_t FILE DIR bool
    int8_t int16_t int32_t int64_t uint8_t uint16_t uint32_t uint64_t intptr_t uintptr_t
    NULL EOF BUFSIZ PATH_MAX SEEK_SET SEEK_CUR SEEK_END O_RDONLY O_WRONLY O_RDWR O_CREAT
    O_TRUNC O_APPEND EXIT_SUCCESS EXIT_FAILURE true false main
""".split())


@dataclass(frozen=True)
class RenameMap:
    pairs: dict[str, str]
    seed: int

    def to_json(self) -> dict:
        return dict(sorted(self.pairs.items()))

    def dumps(self) -> str:
        return json.dumps(self.to_json(), indent=2, ensure_ascii=False) + "\n"


def _identifier_nodes(tree) -> list:
    out = []
    stack = [tree.root_node]
    while stack:
        n = stack.pop()
        if n.type in IDENTIFIER_NODES:
            out.append(n)
        stack.extend(n.children)
    return out


def fresh_name(original: str, seed: int, length: int = 8) -> str:
    digest = hashlib.sha256(f"{seed}:{original}".encode("utf-8")).hexdigest()[:length]
    name = f"id_{digest}"
    return name.upper() if MACRO_NAME.fullmatch(original) else name


def build_rename_map(names: Iterable[str], taken: set[str], seed: int) -> RenameMap:
    pairs: dict[str, str] = {}
    used = set(taken)
    for original in sorted(set(names)):
        length = 8
        candidate = fresh_name(original, seed, length)
        while candidate in used:
            length += 4
            if length > 64:
                raise RuntimeError(f"cannot find a fresh name for {original!r}")
            candidate = fresh_name(original, seed, length)
        used.add(candidate)
        pairs[original] = candidate
    return RenameMap(pairs, seed)


def anonymize_many(units: list[SourceUnit], seed: int,
                   rename_all: bool = False) -> tuple[list[SourceUnit], RenameMap]:
    """Rename identifiers across several files with one shared mapping."""
    trees = []
    names: set[str] = set()
    for unit in units:
        parsed = parse_unit(unit)
        if parsed.errors:
            raise parsed.errors[0]
        if parsed.tree.root_node.has_error:
            bad = parsed.tree.root_node
            raise CSyntaxError("unit does not parse", unit.path, bad.start_point[0] + 1, 1)
        idents = _identifier_nodes(parsed.tree)
        trees.append(idents)
        names |= {n.text.decode("utf-8") for n in idents}
    renamed = {n for n in names if rename_all or n not in STD_NAMES}
    mapping = build_rename_map(renamed, names, seed)
    return [_rewrite(u, ids, mapping) for u, ids in zip(units, trees)], mapping


def anonymize(unit: SourceUnit, seed: int, rename_all: bool = False) -> tuple[SourceUnit, RenameMap]:
    """Replace every user-defined identifier by a fresh name derived from ``seed``.

    Fresh names are ``id_`` plus a hash of (seed, original), extended on
    collision, so the mapping is injective and stable across runs.
    """
    out, mapping = anonymize_many([unit], seed, rename_all)
    return out[0], mapping


_WORDS = re.compile(rb"[A-Za-z_][A-Za-z0-9_]*")
_INCLUDE = re.compile(rb"^[ \t]*#[ \t]*include\b")


def _rewrite(unit: SourceUnit, idents, mapping: RenameMap) -> SourceUnit:
    data = unit.data
    blanked = unit.blanked()
    pieces = []
    pos = 0
    for n in sorted(idents, key=lambda n: n.start_byte):
        new = mapping.pairs.get(n.text.decode("utf-8"))
        if new is None:
            continue
        pieces.append(data[pos:n.start_byte])
        pieces.append(new.encode("utf-8"))
        pos = n.end_byte
    pieces.append(data[pos:])
    text = b"".join(pieces)
    # directive lines were invisible to the parser; rename their identifiers textually
    if blanked != data:
        text = _rename_directives(text, mapping)
    return SourceUnit(unit.path, text.decode("utf-8"))


def _rename_directives(data: bytes, mapping: RenameMap) -> bytes:
    out = []
    continuing = False
    for line in data.splitlines(keepends=True):
        body = line.rstrip(b"\r\n")
        directive = continuing or body.lstrip().startswith(b"#")
        continuing = directive and body.endswith(b"\\")
        if directive and not _INCLUDE.match(body):
            line = _WORDS.sub(
                lambda m: mapping.pairs.get(m.group().decode(), m.group().decode()).encode(), line)
        out.append(line)
    return b"".join(out)


__all__ = ["RenameMap", "STD_NAMES", "anonymize", "anonymize_many", "build_rename_map",
           "fresh_name"]
