import random


def init(seed):
    random.seed(seed)


def generate():
    n = random.randint(1, 10)
    values = [str(random.randint(1, 100)) for _ in range(n)]
    return f"{n}\n{' '.join(values)}\n"


def mutate(text):
    tokens = text.split()
    if not tokens:
        return generate()
    i = random.randrange(len(tokens))
    op = random.choice(["bump", "swap", "copy"])
    if op == "bump" and tokens[i].lstrip("-").isdigit():
        tokens[i] = str(int(tokens[i]) + random.choice([-1, 1]))
    elif op == "swap":
        j = random.randrange(len(tokens))
        tokens[i], tokens[j] = tokens[j], tokens[i]
    else:
        tokens[i] = random.choice(tokens)
    return " ".join(tokens) + "\n"


def fuzz(buf, add_buf, max_size):
    try:
        if random.random() < 0.3:
            text = generate()
        else:
            text = mutate(buf.decode("utf-8", "replace"))
    except Exception:
        text = generate()
    return bytearray(text, "utf-8")[:max_size]
