package util

func Take(xs []int, n int) []int {
	if n > len(xs) {
		n = len(xs)
	}
	return xs[:n]
}

func Sum(xs []int) int {
	total := 0
	for _, x := range xs {
		total += x
	}
	return total
}
