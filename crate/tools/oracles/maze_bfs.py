"""Independent shortest-path oracle for the built-in maze target."""
from collections import deque

GRID = [
    "S..############",
    "##.#....#######",
    "...#.##.#######",
    "#..##...#######",
    "#.........#####",
    "#####.#######.#",
    "#####........##",
    "#.#.######.####",
    "#........#....E",
]
W, H = 15, 9
MOVES = {"U": (0, -1), "D": (0, 1), "L": (-1, 0), "R": (1, 0)}


def bfs():
    start = end = None
    for y, row in enumerate(GRID):
        assert len(row) == W, (y, len(row))
        for x, c in enumerate(row):
            if c == "S":
                start = (x, y)
            if c == "E":
                end = (x, y)
    prev = {start: None}
    q = deque([start])
    while q:
        cur = q.popleft()
        if cur == end:
            break
        for m in "DRUL":
            dx, dy = MOVES[m]
            nx, ny = cur[0] + dx, cur[1] + dy
            if 0 <= nx < W and 0 <= ny < H and GRID[ny][nx] != "#" and (nx, ny) not in prev:
                prev[(nx, ny)] = (cur, m)
                q.append((nx, ny))
    path = []
    cur = end
    while prev[cur] is not None:
        cur, m = prev[cur]
        path.append(m)
    return "".join(reversed(path)), start, end


if __name__ == "__main__":
    p, s, e = bfs()
    print(len(p), p)
    x, y = s
    best = 0
    stall = 0
    worst = 0
    for m in p:
        dx, dy = MOVES[m]
        x, y = x + dx, y + dy
        idx = x + y * W
        if idx > best:
            best = idx
            stall = 0
        else:
            stall += 1
            worst = max(worst, stall)
    print("longest stall without MAX progress:", worst)
