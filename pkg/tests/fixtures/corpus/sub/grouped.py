l = []
l.append(1)  # Mutation 1
l.append(2)  # Mutation 2
s = sum(l)
a = sum(l) / len(l)
m = max(l)
