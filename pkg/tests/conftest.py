import pytest

from contractchecker.core import Registry, Role, keygen, sign_as_client, sign_as_server, make_read, make_write

ACCEPTANCE_LINES: list = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split()[1].rstrip(":"))):
            terminalreporter.write_line(line)


class TwoClients:
    """Two clients and a server with three dual-signed ops: w1(K) and r3(K)
    by client 1, w2(K) by client 2."""

    def __init__(self, concurrent: bool = False):
        self.server = keygen(Role.SERVER, "fx-server")
        self.c1 = keygen(Role.CLIENT, "fx-c1")
        self.c2 = keygen(Role.CLIENT, "fx-c2")
        self.other = keygen(Role.CLIENT, "fx-stranger")
        self.registry = Registry([self.server, self.c1, self.c2])
        if concurrent:
            iv = {"w1": (0, 5), "w2": (1, 4), "r3": (6, 7)}
        else:
            iv = {"w1": (0, 1), "w2": (2, 3), "r3": (4, 5)}
        w1 = make_write(1, self.c1.party, b"K", b"v1", *iv["w1"])
        w2 = make_write(2, self.c2.party, b"K", b"v2", *iv["w2"])
        r3 = make_read(3, self.c1.party, b"K", w1, *iv["r3"])
        self.w1, self.w2, self.r3 = (self.dual(o, k) for o, k in ((w1, self.c1), (w2, self.c2), (r3, self.c1)))

    def dual(self, op, client_key):
        return sign_as_server(sign_as_client(op, client_key), self.server)


@pytest.fixture
def two_clients():
    return TwoClients()


@pytest.fixture
def two_clients_concurrent():
    return TwoClients(concurrent=True)
