"""Census of Feynman diagrams: sizes of F_m,n and how many admit resonant indices."""

from wavekin.diagrams import count_D, feynman_set, is_true, render

print("|D_m| for m = 0..5:", [count_D(m) for m in range(6)])
for N in range(5):
    for m in range(N + 1):
        Fs = feynman_set(m, N - m)
        n_true = sum(is_true(F) for F in Fs)
        print(f"F_{m},{N - m}: {len(Fs):5d} diagrams, {n_true:5d} with alpha free of zero rows")
print()
print(render(feynman_set(1, 1)[0]))
bad = next(F for F in feynman_set(3, 0) if not is_true(F))
print()
print(render(bad))
