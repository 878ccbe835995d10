package auth

import "crypto/subtle"

type Checker struct {
	secret string
}

func (c *Checker) Valid(token string) bool {
	return subtle.ConstantTimeCompare([]byte(token), []byte(c.secret)) == 1
}

func Wrap(next func(string) bool) func(string) bool {
	return func(t string) bool {
		if t == "" {
			return false
		}
		return next(t)
	}
}
