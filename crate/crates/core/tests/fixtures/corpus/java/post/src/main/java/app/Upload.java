package app;

import java.io.File;
import java.util.List;

public class Upload {
    private final File base;

    public Upload(File base) {
        this.base = base;
    }

    public File target(String name) throws java.io.IOException {
        File f = new File(base, name).getCanonicalFile();
        if (!f.toPath().startsWith(base.getCanonicalFile().toPath())) {
            throw new SecurityException("path escapes upload dir");
        }
        return f;
    }

    public List<String> names(List<File> files) {
        return files.stream()
            .map(f -> f.getName())
            .toList();
    }
}
