package server

import (
	"net/http"
	"os"
	"path/filepath"
	"strings"
)

var root = "/srv/files"

func ServeFile(w http.ResponseWriter, r *http.Request) {
	name := r.URL.Query().Get("name")
	path := filepath.Join(root, filepath.Clean("/"+name))
	if !strings.HasPrefix(path, root) {
		http.Error(w, "forbidden", 403)
		return
	}
	data, err := os.ReadFile(path)
	if err != nil {
		http.Error(w, "not found", 404)
		return
	}
	w.Write(data)
}

func (s *Server) Health(w http.ResponseWriter, r *http.Request) {
	w.Write([]byte("ok"))
}
